#include "dsat/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dsat {

ScenarioError::ScenarioError(int line, const std::string& what)
    : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

double PuActivityModel::duty_cycle() const {
  switch (kind) {
    case Kind::AlwaysIdle: return 0.0;
    case Kind::AlwaysBusy: return 1.0;
    case Kind::Markov: {
      const double on = static_cast<double>(mean_on.count());
      const double off = static_cast<double>(mean_off.count());
      return on / (on + off);
    }
    case Kind::Scripted: break;
  }
  // scripted: fraction of the span up to the last interval end
  if (busy.empty()) return 0.0;
  Duration total{};
  for (const auto& b : busy) total += b.end - b.start;
  return static_cast<double>(total.count()) / static_cast<double>(busy.back().end.count());
}

// ---------------------------------------------------------------------------
// Scalar formats

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? next : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

Duration parse_duration(std::string_view text) {
  text = trim(text);
  std::size_t unit_at = 0;
  while (unit_at < text.size() && (std::isdigit(static_cast<unsigned char>(text[unit_at])) ||
                                   text[unit_at] == '.')) {
    ++unit_at;
  }
  const std::string_view number = text.substr(0, unit_at);
  const std::string_view unit = trim(text.substr(unit_at));

  std::int64_t scale = 0;
  if (unit == "s") {
    scale = 1'000'000;
  } else if (unit == "ms") {
    scale = 1'000;
  } else if (unit == "us") {
    scale = 1;
  } else if (unit.empty() && number == "0") {
    return Duration::zero();
  } else {
    throw Error("bad duration '" + std::string(text) + "' (expected a number with s, ms or us)");
  }

  const auto dot = number.find('.');
  const std::string_view whole = number.substr(0, dot);
  const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : number.substr(dot + 1);
  if (!all_digits(whole) || (dot != std::string_view::npos && !all_digits(frac)) || frac.size() > 6) {
    throw Error("bad duration '" + std::string(text) + "'");
  }
  std::int64_t us = std::stoll(std::string(whole)) * scale;
  if (!frac.empty()) {
    std::int64_t denom = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) denom *= 10;
    const std::int64_t num = std::stoll(std::string(frac)) * scale;
    if (num % denom != 0) throw Error("duration '" + std::string(text) + "' is finer than 1us");
    us += num / denom;
  }
  return Duration(us);
}

std::string format_duration(Duration d) {
  const auto us = d.count();
  if (us != 0 && us % 1'000'000 == 0) return std::to_string(us / 1'000'000) + "s";
  if (us != 0 && us % 1'000 == 0) return std::to_string(us / 1'000) + "ms";
  return std::to_string(us) + "us";
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

double parse_double(std::string_view s) {
  s = trim(s);
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw Error("bad number '" + std::string(s) + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw Error("bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::uint16_t parse_id(std::string_view s) {
  const auto v = parse_int(s);
  if (v < 0 || v >= 0xFFFF) throw Error("id out of range '" + std::string(s) + "'");
  return static_cast<std::uint16_t>(v);
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw Error("bad boolean '" + std::string(s) + "'");
}

std::vector<ChannelId> parse_channel_list(std::string_view s) {
  std::vector<ChannelId> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) out.push_back(ChannelId{parse_id(part)});
  return out;
}

std::string format_channel_list(const std::vector<ChannelId>& list) {
  std::string out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(list[i].value);
  }
  return out;
}

Position parse_position(std::string_view s) {
  const auto parts = split(s, ',');
  if (parts.size() < 2 || parts.size() > 3) throw Error("position needs 2 or 3 coordinates");
  Position p{parse_double(parts[0]), parse_double(parts[1]), 0.0};
  if (parts.size() == 3) p.z = parse_double(parts[2]);
  return p;
}

std::vector<BusyInterval> parse_busy(std::string_view s) {
  std::vector<BusyInterval> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string_view::npos) throw Error("busy interval needs start-end");
    out.push_back({parse_duration(part.substr(0, dash)), parse_duration(part.substr(dash + 1))});
  }
  return out;
}

MacKind parse_mac(std::string_view s) {
  if (s == "dsat") return MacKind::Dsat;
  if (s == "ccc") return MacKind::Ccc;
  throw Error("mac must be dsat or ccc");
}

DataType parse_type(std::string_view s) {
  const auto t = parse_data_type(s);
  if (!t) throw Error("data_type must be text, av, control or safety");
  return *t;
}

int parse_pi(std::string_view s) {
  const auto v = parse_int(s);
  if (v < 0 || v > kMaxPriorityIndex) throw Error("pi must be in 0..21");
  return static_cast<int>(v);
}

// ---------------------------------------------------------------------------
// Parser

struct Line {
  int number = 0;
  std::string key;
  std::string value;
};

struct Section {
  int number = 0;
  std::string name;
  std::optional<std::uint16_t> index;
  std::vector<Line> lines;
};

std::vector<Section> tokenize(std::string_view text) {
  std::vector<Section> out;
  int number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++number;
    const auto hash = raw.find_first_of("#;");
    if (hash != std::string_view::npos) raw = raw.substr(0, hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    if (raw.front() == '[') {
      if (raw.back() != ']') throw ScenarioError(number, "unterminated section header");
      const auto inner = trim(raw.substr(1, raw.size() - 2));
      Section s;
      s.number = number;
      const auto space = inner.find_first_of(" \t");
      s.name = std::string(inner.substr(0, space));
      if (space != std::string_view::npos) {
        try {
          s.index = parse_id(inner.substr(space + 1));
        } catch (const ScenarioError&) {
          throw;
        } catch (const Error& e) {
          throw ScenarioError(number, e.what());
        }
      }
      out.push_back(std::move(s));
      continue;
    }
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos) throw ScenarioError(number, "expected key = value");
    if (out.empty()) throw ScenarioError(number, "key outside of any section");
    Line l{number, std::string(trim(raw.substr(0, eq))), std::string(trim(raw.substr(eq + 1)))};
    if (l.key.empty()) throw ScenarioError(number, "empty key");
    for (const auto& prev : out.back().lines) {
      if (prev.key == l.key) throw ScenarioError(number, "duplicate key '" + l.key + "'");
    }
    out.back().lines.push_back(std::move(l));
  }
  return out;
}

using Handler = void (*)(Scenario&, Section&, const Line&);

[[noreturn]] void unknown_key(const Section& s, const Line& l) {
  throw ScenarioError(l.number, "unknown key '" + l.key + "' in [" + s.name + "]");
}

void scenario_key(Scenario& sc, Section& s, const Line& l) {
  const auto& k = l.key;
  const auto& v = l.value;
  if (k == "name") sc.name = v;
  else if (k == "mac") sc.mac = parse_mac(v);
  else if (k == "sim_time") sc.sim_time = parse_duration(v);
  else if (k == "warmup") sc.warmup = parse_duration(v);
  else if (k == "seed") sc.seed = static_cast<std::uint64_t>(parse_int(v));
  else if (k == "seeds") sc.seeds = static_cast<int>(parse_int(v));
  else if (k == "bytes_per_slot") sc.bytes_per_slot = static_cast<int>(parse_int(v));
  else if (k == "queue_limit") sc.queue_limit = static_cast<int>(parse_int(v));
  else if (k == "sleep_after") sc.sleep_after = static_cast<int>(parse_int(v));
  else if (k == "join_idle") sc.join_idle = parse_bool(v);
  else if (k == "pu_cycle") sc.pu_cycle = parse_duration(v);
  else unknown_key(s, l);
}

void timing_key(Scenario& sc, Section& s, const Line& l) {
  auto& t = sc.timing;
  const Duration d = parse_duration(l.value);
  if (l.key == "superframe") t.superframe = d;
  else if (l.key == "quiet") t.quiet = d;
  else if (l.key == "control") t.control = d;
  else if (l.key == "data") t.data = d;
  else if (l.key == "ack") t.ack = d;
  else if (l.key == "wait") t.wait = d;
  else if (l.key == "detect_interval") {
    t.detect_interval = d;
    sc.detect_follows_superframe = false;
  } else {
    unknown_key(s, l);
  }
}

void radio_key(Scenario& sc, Section& s, const Line& l) {
  auto& r = sc.radio;
  const auto& k = l.key;
  const auto& v = l.value;
  if (k == "p_tx_max") r.p_tx_max_mw = parse_double(v);
  else if (k == "p_rx") r.p_rx_mw = parse_double(v);
  else if (k == "p_idle") r.p_idle_mw = parse_double(v);
  else if (k == "gain_tx") r.gain_tx = parse_double(v);
  else if (k == "gain_rx") r.gain_rx = parse_double(v);
  else if (k == "wavelength") r.wavelength_m = parse_double(v);
  else if (k == "loss") r.loss = parse_double(v);
  else if (k == "range") r.range_m = parse_double(v);
  else if (k == "friis") {
    if (v == "paper") r.friis = FriisForm::Paper;
    else if (v == "standard") r.friis = FriisForm::Standard;
    else throw Error("friis must be paper or standard");
  } else if (k == "placement") {
    if (v == "ball") r.placement = Placement::Ball;
    else if (v == "disk") r.placement = Placement::Disk;
    else throw Error("placement must be ball or disk");
  } else if (k == "power_control") {
    sc.power_control = parse_bool(v);
  } else {
    unknown_key(s, l);
  }
}

void nodes_key(Scenario& sc, Section& s, const Line& l) {
  if (l.key == "count") sc.nodes.count = static_cast<int>(parse_int(l.value));
  else if (l.key == "channel") sc.nodes.channel = ChannelId{parse_id(l.value)};
  else if (l.key == "vacant") sc.nodes.vacant = parse_channel_list(l.value);
  else if (l.key == "preregistered") sc.nodes.preregistered = parse_bool(l.value);
  else unknown_key(s, l);
}

void flows_key(Scenario& sc, Section& s, const Line& l) {
  auto& f = sc.flow_template;
  if (l.key == "count") f.count = static_cast<int>(parse_int(l.value));
  else if (l.key == "packet_size") f.packet_size = static_cast<int>(parse_int(l.value));
  else if (l.key == "interval") f.interval = parse_duration(l.value);
  else if (l.key == "data_type") f.data_type = parse_type(l.value);
  else if (l.key == "pi") f.pi = parse_pi(l.value);
  else if (l.key == "start") f.start = parse_duration(l.value);
  else unknown_key(s, l);
}

void ccc_key(Scenario& sc, Section& s, const Line& l) {
  auto& c = sc.ccc;
  if (l.key == "bandwidth") c.bandwidth_bps = parse_double(l.value);
  else if (l.key == "rts_bytes") c.rts_bytes = static_cast<int>(parse_int(l.value));
  else if (l.key == "cts_bytes") c.cts_bytes = static_cast<int>(parse_int(l.value));
  else if (l.key == "ack_bytes") c.ack_bytes = static_cast<int>(parse_int(l.value));
  else if (l.key == "sifs") c.sifs = parse_duration(l.value);
  else if (l.key == "cw_min") c.cw_min = static_cast<int>(parse_int(l.value));
  else if (l.key == "cw_max") c.cw_max = static_cast<int>(parse_int(l.value));
  else unknown_key(s, l);
}

void sweep_key(Scenario& sc, Section& s, const Line& l) {
  if (!sc.sweep) sc.sweep.emplace();
  if (l.key == "parameter") {
    sc.sweep->parameter = l.value;
  } else if (l.key == "values") {
    sc.sweep->values.clear();
    for (auto part : split(l.value, ',')) {
      if (part.empty()) throw Error("empty sweep value");
      sc.sweep->values.emplace_back(part);
    }
  } else {
    unknown_key(s, l);
  }
}

void channel_section(Scenario& sc, const Section& s) {
  ChannelConfig c;
  c.id = ChannelId{*s.index};
  std::optional<int> kind_line;
  for (const auto& l : s.lines) {
    try {
      if (l.key == "pu") {
        kind_line = l.number;
        if (l.value == "idle") c.pu.kind = PuActivityModel::Kind::AlwaysIdle;
        else if (l.value == "busy") c.pu.kind = PuActivityModel::Kind::AlwaysBusy;
        else if (l.value == "scripted") c.pu.kind = PuActivityModel::Kind::Scripted;
        else if (l.value == "markov") c.pu.kind = PuActivityModel::Kind::Markov;
        else throw Error("pu must be idle, busy, scripted or markov");
      } else if (l.key == "busy") {
        c.pu.busy = parse_busy(l.value);
      } else if (l.key == "mean_on") {
        c.pu.mean_on = parse_duration(l.value);
      } else if (l.key == "mean_off") {
        c.pu.mean_off = parse_duration(l.value);
      } else {
        unknown_key(s, l);
      }
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioError(l.number, e.what());
    }
  }
  using K = PuActivityModel::Kind;
  const int at = kind_line.value_or(s.number);
  if (c.pu.kind != K::Scripted && !c.pu.busy.empty()) {
    throw ScenarioError(at, "busy intervals need pu = scripted");
  }
  if (c.pu.kind != K::Markov && (c.pu.mean_on.count() || c.pu.mean_off.count())) {
    throw ScenarioError(at, "mean_on/mean_off need pu = markov");
  }
  if (c.pu.kind == K::Markov && (c.pu.mean_on <= Duration::zero() || c.pu.mean_off <= Duration::zero())) {
    throw ScenarioError(at, "markov PU needs positive mean_on and mean_off");
  }
  for (std::size_t i = 0; i < c.pu.busy.size(); ++i) {
    const auto& b = c.pu.busy[i];
    if (b.end <= b.start) throw ScenarioError(at, "busy interval must have end > start");
    if (i > 0 && b.start < c.pu.busy[i - 1].end) {
      throw ScenarioError(at, "busy intervals must be ordered and disjoint");
    }
  }
  if (find_channel(sc, c.id)) throw ScenarioError(s.number, "duplicate channel section");
  sc.channels.push_back(std::move(c));
}

void node_section(Scenario& sc, const Section& s) {
  NodeOverride o;
  for (const auto& l : s.lines) {
    try {
      if (l.key == "channel") o.channel = ChannelId{parse_id(l.value)};
      else if (l.key == "vacant") o.vacant = parse_channel_list(l.value);
      else if (l.key == "start") o.start = parse_duration(l.value);
      else if (l.key == "leave") o.leave = parse_duration(l.value);
      else if (l.key == "position") o.position = parse_position(l.value);
      else unknown_key(s, l);
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioError(l.number, e.what());
    }
  }
  if (!sc.node_overrides.emplace(NodeId{*s.index}, std::move(o)).second) {
    throw ScenarioError(s.number, "duplicate node section");
  }
}

void flow_section(Scenario& sc, const Section& s) {
  FlowConfig f;
  f.id = FlowId{*s.index};
  bool has_src = false, has_dst = false, has_interval = false;
  for (const auto& l : s.lines) {
    try {
      if (l.key == "src") {
        f.src = NodeId{parse_id(l.value)};
        has_src = true;
      } else if (l.key == "dst") {
        f.dst = NodeId{parse_id(l.value)};
        has_dst = true;
      } else if (l.key == "packet_size") {
        f.packet_size = static_cast<int>(parse_int(l.value));
      } else if (l.key == "interval") {
        f.interval = parse_duration(l.value);
        has_interval = true;
      } else if (l.key == "data_type") {
        f.data_type = parse_type(l.value);
      } else if (l.key == "pi") {
        f.pi = parse_pi(l.value);
      } else if (l.key == "start") {
        f.start = parse_duration(l.value);
      } else if (l.key == "stop") {
        f.stop = parse_duration(l.value);
      } else {
        unknown_key(s, l);
      }
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioError(l.number, e.what());
    }
  }
  if (!has_src || !has_dst || !has_interval) {
    throw ScenarioError(s.number, "flow needs src, dst and interval");
  }
  if (!sc.flows.emplace(f.id, f).second) throw ScenarioError(s.number, "duplicate flow section");
}

void negotiate_section(std::map<std::uint16_t, NegotiationConfig>& out, const Section& s) {
  NegotiationConfig n;
  bool has_a = false, has_b = false, has_at = false;
  for (const auto& l : s.lines) {
    try {
      if (l.key == "a") {
        n.a = NodeId{parse_id(l.value)};
        has_a = true;
      } else if (l.key == "b") {
        n.b = NodeId{parse_id(l.value)};
        has_b = true;
      } else if (l.key == "at") {
        n.at = parse_duration(l.value);
        has_at = true;
      } else {
        unknown_key(s, l);
      }
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioError(l.number, e.what());
    }
  }
  if (!has_a || !has_b || !has_at) throw ScenarioError(s.number, "negotiate needs a, b and at");
  if (!out.emplace(*s.index, n).second) throw ScenarioError(s.number, "duplicate negotiate section");
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  Scenario sc;
  std::set<std::string> seen_singletons;
  std::map<std::uint16_t, NegotiationConfig> negotiations;

  for (auto& s : tokenize(text)) {
    static const std::map<std::string, Handler> singletons = {
        {"scenario", scenario_key}, {"timing", timing_key}, {"radio", radio_key},
        {"nodes", nodes_key},       {"flows", flows_key},   {"ccc", ccc_key},
        {"sweep", sweep_key},
    };
    static const std::set<std::string> indexed = {"channel", "node", "flow", "negotiate"};

    if (const auto it = singletons.find(s.name); it != singletons.end()) {
      if (s.index) throw ScenarioError(s.number, "[" + s.name + "] takes no index");
      if (!seen_singletons.insert(s.name).second) {
        throw ScenarioError(s.number, "duplicate section [" + s.name + "]");
      }
      for (const auto& l : s.lines) {
        try {
          it->second(sc, s, l);
        } catch (const ScenarioError&) {
          throw;
        } catch (const Error& e) {
          throw ScenarioError(l.number, e.what());
        }
      }
      continue;
    }
    if (!indexed.contains(s.name)) throw ScenarioError(s.number, "unknown section [" + s.name + "]");
    if (!s.index) throw ScenarioError(s.number, "[" + s.name + "] needs an index");
    if (s.name == "channel") channel_section(sc, s);
    else if (s.name == "node") node_section(sc, s);
    else if (s.name == "flow") flow_section(sc, s);
    else negotiate_section(negotiations, s);
  }

  std::sort(sc.channels.begin(), sc.channels.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (auto& [idx, n] : negotiations) sc.negotiations.push_back(n);
  if (sc.detect_follows_superframe) sc.timing.detect_interval = sc.timing.superframe;
  if (sc.sweep && (sc.sweep->parameter.empty() || sc.sweep->values.empty())) {
    throw ScenarioError(0, "[sweep] needs parameter and values");
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(0, "cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

// ---------------------------------------------------------------------------
// Serializer

namespace {

std::string_view mac_name(MacKind m) {
  return m == MacKind::Dsat ? "dsat" : "ccc";
}

std::string_view pu_name(PuActivityModel::Kind k) {
  switch (k) {
    case PuActivityModel::Kind::AlwaysIdle: return "idle";
    case PuActivityModel::Kind::AlwaysBusy: return "busy";
    case PuActivityModel::Kind::Scripted: return "scripted";
    case PuActivityModel::Kind::Markov: return "markov";
  }
  return "idle";
}

std::string position_text(const Position& p) {
  return format_double(p.x) + ", " + format_double(p.y) + ", " + format_double(p.z);
}

}  // namespace

std::string serialize_scenario(const Scenario& sc) {
  std::ostringstream o;
  const Scenario def;
  const auto bool_text = [](bool b) { return b ? "true" : "false"; };

  o << "[scenario]\n";
  o << "name = " << sc.name << "\n";
  o << "mac = " << mac_name(sc.mac) << "\n";
  o << "sim_time = " << format_duration(sc.sim_time) << "\n";
  o << "warmup = " << format_duration(sc.warmup) << "\n";
  o << "seed = " << sc.seed << "\n";
  o << "seeds = " << sc.seeds << "\n";
  o << "bytes_per_slot = " << sc.bytes_per_slot << "\n";
  o << "queue_limit = " << sc.queue_limit << "\n";
  o << "sleep_after = " << sc.sleep_after << "\n";
  o << "join_idle = " << bool_text(sc.join_idle) << "\n";
  o << "pu_cycle = " << format_duration(sc.pu_cycle) << "\n";

  const auto& t = sc.timing;
  o << "\n[timing]\n";
  o << "superframe = " << format_duration(t.superframe) << "\n";
  o << "quiet = " << format_duration(t.quiet) << "\n";
  o << "control = " << format_duration(t.control) << "\n";
  o << "data = " << format_duration(t.data) << "\n";
  o << "ack = " << format_duration(t.ack) << "\n";
  o << "wait = " << format_duration(t.wait) << "\n";
  if (!sc.detect_follows_superframe) {
    o << "detect_interval = " << format_duration(t.detect_interval) << "\n";
  }

  const auto& r = sc.radio;
  o << "\n[radio]\n";
  o << "p_tx_max = " << format_double(r.p_tx_max_mw) << "\n";
  o << "p_rx = " << format_double(r.p_rx_mw) << "\n";
  o << "p_idle = " << format_double(r.p_idle_mw) << "\n";
  o << "gain_tx = " << format_double(r.gain_tx) << "\n";
  o << "gain_rx = " << format_double(r.gain_rx) << "\n";
  o << "wavelength = " << format_double(r.wavelength_m) << "\n";
  o << "loss = " << format_double(r.loss) << "\n";
  o << "range = " << format_double(r.range_m) << "\n";
  o << "friis = " << (r.friis == FriisForm::Paper ? "paper" : "standard") << "\n";
  o << "placement = " << (r.placement == Placement::Ball ? "ball" : "disk") << "\n";
  o << "power_control = " << bool_text(sc.power_control) << "\n";

  for (const auto& c : sc.channels) {
    o << "\n[channel " << c.id.value << "]\n";
    o << "pu = " << pu_name(c.pu.kind) << "\n";
    if (c.pu.kind == PuActivityModel::Kind::Scripted) {
      o << "busy = ";
      for (std::size_t i = 0; i < c.pu.busy.size(); ++i) {
        if (i) o << ", ";
        o << format_duration(c.pu.busy[i].start) << "-" << format_duration(c.pu.busy[i].end);
      }
      o << "\n";
    }
    if (c.pu.kind == PuActivityModel::Kind::Markov) {
      o << "mean_on = " << format_duration(c.pu.mean_on) << "\n";
      o << "mean_off = " << format_duration(c.pu.mean_off) << "\n";
    }
  }

  o << "\n[nodes]\n";
  o << "count = " << sc.nodes.count << "\n";
  o << "channel = " << sc.nodes.channel.value << "\n";
  o << "vacant = " << format_channel_list(sc.nodes.vacant) << "\n";
  o << "preregistered = " << bool_text(sc.nodes.preregistered) << "\n";

  for (const auto& [id, n] : sc.node_overrides) {
    o << "\n[node " << id.value << "]\n";
    if (n.channel) o << "channel = " << n.channel->value << "\n";
    if (n.vacant) o << "vacant = " << format_channel_list(*n.vacant) << "\n";
    if (n.start) o << "start = " << format_duration(*n.start) << "\n";
    if (n.leave) o << "leave = " << format_duration(*n.leave) << "\n";
    if (n.position) o << "position = " << position_text(*n.position) << "\n";
  }

  const auto& ft = sc.flow_template;
  o << "\n[flows]\n";
  o << "count = " << ft.count << "\n";
  o << "packet_size = " << ft.packet_size << "\n";
  o << "interval = " << format_duration(ft.interval) << "\n";
  o << "data_type = " << to_string(ft.data_type) << "\n";
  if (ft.pi) o << "pi = " << *ft.pi << "\n";
  o << "start = " << format_duration(ft.start) << "\n";

  for (const auto& [id, f] : sc.flows) {
    o << "\n[flow " << id.value << "]\n";
    o << "src = " << f.src.value << "\n";
    o << "dst = " << f.dst.value << "\n";
    o << "packet_size = " << f.packet_size << "\n";
    o << "interval = " << format_duration(f.interval) << "\n";
    o << "data_type = " << to_string(f.data_type) << "\n";
    if (f.pi) o << "pi = " << *f.pi << "\n";
    o << "start = " << format_duration(f.start) << "\n";
    if (f.stop) o << "stop = " << format_duration(*f.stop) << "\n";
  }

  for (std::size_t i = 0; i < sc.negotiations.size(); ++i) {
    const auto& n = sc.negotiations[i];
    o << "\n[negotiate " << i + 1 << "]\n";
    o << "a = " << n.a.value << "\n";
    o << "b = " << n.b.value << "\n";
    o << "at = " << format_duration(n.at) << "\n";
  }

  const auto& c = sc.ccc;
  o << "\n[ccc]\n";
  o << "bandwidth = " << format_double(c.bandwidth_bps) << "\n";
  o << "rts_bytes = " << c.rts_bytes << "\n";
  o << "cts_bytes = " << c.cts_bytes << "\n";
  o << "ack_bytes = " << c.ack_bytes << "\n";
  o << "sifs = " << format_duration(c.sifs) << "\n";
  o << "cw_min = " << c.cw_min << "\n";
  o << "cw_max = " << c.cw_max << "\n";

  if (sc.sweep) {
    o << "\n[sweep]\n";
    o << "parameter = " << sc.sweep->parameter << "\n";
    o << "values = ";
    for (std::size_t i = 0; i < sc.sweep->values.size(); ++i) {
      if (i) o << ", ";
      o << sc.sweep->values[i];
    }
    o << "\n";
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Expansion and validation

const ChannelConfig* find_channel(const Scenario& sc, ChannelId id) {
  for (const auto& c : sc.channels) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::vector<NodeSpec> expand_nodes(const Scenario& sc) {
  std::map<NodeId, NodeSpec> out;
  const auto base = [&](NodeId id) {
    NodeSpec n;
    n.id = id;
    n.channel = sc.nodes.channel;
    n.vacant = sc.nodes.vacant;
    return n;
  };
  for (int i = 1; i <= sc.nodes.count; ++i) {
    const NodeId id{static_cast<std::uint16_t>(i)};
    out.emplace(id, base(id));
  }
  for (const auto& [id, o] : sc.node_overrides) {
    auto it = out.try_emplace(id, base(id)).first;
    NodeSpec& n = it->second;
    if (o.channel) n.channel = *o.channel;
    if (o.vacant) n.vacant = *o.vacant;
    if (o.start) n.start = *o.start;
    if (o.leave) n.leave = o.leave;
    if (o.position) n.position = o.position;
  }
  std::vector<NodeSpec> list;
  for (auto& [id, n] : out) {
    if (n.vacant.empty()) n.vacant = {n.channel};
    if (std::find(n.vacant.begin(), n.vacant.end(), n.channel) == n.vacant.end()) {
      n.vacant.insert(n.vacant.begin(), n.channel);
    }
    list.push_back(std::move(n));
  }
  return list;
}

std::vector<FlowConfig> expand_flows(const Scenario& sc) {
  std::map<FlowId, FlowConfig> out;
  const int n_nodes = static_cast<int>(expand_nodes(sc).size());
  const auto& ft = sc.flow_template;
  for (int i = 1; i <= ft.count && n_nodes > 0; ++i) {
    FlowConfig f;
    f.id = FlowId{static_cast<std::uint16_t>(i)};
    f.src = NodeId{static_cast<std::uint16_t>((i - 1) % n_nodes + 1)};
    f.dst = NodeId{static_cast<std::uint16_t>(i % n_nodes + 1)};
    f.packet_size = ft.packet_size;
    f.interval = ft.interval;
    f.data_type = ft.data_type;
    f.pi = ft.pi;
    f.start = ft.start;
    out.emplace(f.id, f);
  }
  for (const auto& [id, f] : sc.flows) out.insert_or_assign(id, f);
  std::vector<FlowConfig> list;
  for (auto& [id, f] : out) list.push_back(f);
  return list;
}

const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names = {
      "timing.superframe", "timing.quiet",    "timing.control",         "timing.data",
      "timing.ack",        "timing.wait",     "timing.detect_interval", "nodes.count",
      "flows.count",       "pu.duty_cycle",   "scenario.bytes_per_slot",
  };
  return names;
}

void validate_scenario(const Scenario& sc) {
  const auto fail = [](const std::string& what) { throw ScenarioError(0, what); };
  try {
    validate(sc.timing);
    validate(sc.radio);
  } catch (const ScenarioError&) {
    throw;
  } catch (const Error& e) {
    fail(e.what());
  }
  if (sc.timing.detect_interval < sc.timing.quiet) {
    fail("timing: detect_interval must be at least the quiet period");
  }
  if (sc.sim_time <= Duration::zero()) fail("sim_time must be positive");
  if (sc.warmup < Duration::zero() || sc.warmup >= sc.sim_time) fail("warmup must be in [0, sim_time)");
  if (sc.seeds < 1) fail("seeds must be at least 1");
  if (sc.bytes_per_slot < 1) fail("bytes_per_slot must be positive");
  if (sc.queue_limit < 1) fail("queue_limit must be positive");
  if (sc.sleep_after < 0) fail("sleep_after must be non-negative");
  if (sc.pu_cycle <= Duration::zero()) fail("pu_cycle must be positive");
  if (sc.nodes.count < 0) fail("nodes.count must be non-negative");
  if (sc.flow_template.count < 0) fail("flows.count must be non-negative");

  const auto nodes = expand_nodes(sc);
  std::set<NodeId> ids;
  for (const auto& n : nodes) {
    if (n.id == kBroadcast || n.id.value == 0) fail("node ids must be in 1..65534");
    ids.insert(n.id);
    if (n.start < Duration::zero()) fail("node start must be non-negative");
    if (n.leave && *n.leave <= n.start) fail("node " + std::to_string(n.id.value) + " leaves before it starts");
  }
  const auto flows = expand_flows(sc);
  for (const auto& f : flows) {
    const std::string tag = "flow " + std::to_string(f.id.value);
    if (!ids.contains(f.src) || !ids.contains(f.dst)) fail(tag + " references an unknown node");
    if (f.src == f.dst) fail(tag + " sends to itself");
    if (f.packet_size < 1) fail(tag + " needs a positive packet_size");
    if (f.interval <= Duration::zero()) fail(tag + " needs a positive interval");
    if (f.stop && *f.stop <= f.start) fail(tag + " stops before it starts");
  }
  for (const auto& n : sc.negotiations) {
    if (!ids.contains(n.a) || !ids.contains(n.b)) fail("negotiate references an unknown node");
    if (n.a == n.b) fail("negotiate needs two different nodes");
  }

  const auto& c = sc.ccc;
  if (!(c.bandwidth_bps > 0)) fail("ccc bandwidth must be positive");
  if (c.rts_bytes < 1 || c.cts_bytes < 1 || c.ack_bytes < 1) fail("ccc frame sizes must be positive");
  if (c.sifs < Duration::zero()) fail("ccc sifs must be non-negative");
  if (c.cw_min < 1 || c.cw_max < c.cw_min) fail("ccc needs 1 <= cw_min <= cw_max");
  if (sc.mac == MacKind::Ccc && sc.channels.size() != 2) {
    fail("ccc needs exactly two [channel] sections (control, data)");
  }

  if (sc.sweep) {
    const auto& names = sweep_parameters();
    if (std::find(names.begin(), names.end(), sc.sweep->parameter) == names.end()) {
      fail("unknown sweep parameter '" + sc.sweep->parameter + "'");
    }
    for (const auto& v : sc.sweep->values) {
      try {
        validate_scenario(apply_sweep(Scenario(sc), sc.sweep->parameter, v));
      } catch (const ScenarioError& e) {
        fail("sweep value '" + v + "': " + e.what());
      } catch (const Error& e) {
        fail("sweep value '" + v + "': " + e.what());
      }
    }
  }
}

Scenario apply_sweep(const Scenario& base, const std::string& p, const std::string& value) {
  Scenario sc = base;
  sc.sweep.reset();
  auto& t = sc.timing;
  if (p == "timing.superframe") {
    t.superframe = parse_duration(value);
    if (sc.detect_follows_superframe) t.detect_interval = t.superframe;
  } else if (p == "timing.quiet") {
    t.quiet = parse_duration(value);
  } else if (p == "timing.control") {
    t.control = parse_duration(value);
  } else if (p == "timing.data") {
    t.data = parse_duration(value);
  } else if (p == "timing.ack") {
    t.ack = parse_duration(value);
  } else if (p == "timing.wait") {
    t.wait = parse_duration(value);
  } else if (p == "timing.detect_interval") {
    t.detect_interval = parse_duration(value);
    sc.detect_follows_superframe = false;
  } else if (p == "nodes.count") {
    sc.nodes.count = static_cast<int>(parse_int(value));
  } else if (p == "flows.count") {
    sc.flow_template.count = static_cast<int>(parse_int(value));
  } else if (p == "scenario.bytes_per_slot") {
    sc.bytes_per_slot = static_cast<int>(parse_int(value));
  } else if (p == "pu.duty_cycle") {
    const double duty = parse_double(value);
    if (duty < 0.0 || duty > 1.0) throw Error("pu.duty_cycle must be in [0, 1]");
    PuActivityModel pu;
    if (duty == 0.0) {
      pu.kind = PuActivityModel::Kind::AlwaysIdle;
    } else if (duty == 1.0) {
      pu.kind = PuActivityModel::Kind::AlwaysBusy;
    } else {
      pu.kind = PuActivityModel::Kind::Markov;
      const auto cycle = static_cast<double>(sc.pu_cycle.count());
      pu.mean_on = Duration(static_cast<std::int64_t>(std::llround(duty * cycle)));
      pu.mean_off = sc.pu_cycle - pu.mean_on;
      if (pu.mean_on <= Duration::zero() || pu.mean_off <= Duration::zero()) {
        throw Error("pu.duty_cycle too close to 0 or 1 for pu_cycle");
      }
    }
    // every channel the CR nodes may use gets the same PU process
    if (sc.channels.empty()) sc.channels.push_back({sc.nodes.channel, {}});
    for (auto& c : sc.channels) c.pu = pu;
  } else {
    throw Error("unknown sweep parameter '" + p + "'");
  }
  return sc;
}

}  // namespace dsat
