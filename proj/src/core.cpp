#include "dsat/core.hpp"

#include <algorithm>

namespace dsat {

void validate(const FrameTiming& t) {
  const auto positive = [](Duration d, const char* name) {
    if (d <= Duration::zero()) throw Error(std::string("timing: ") + name + " must be positive");
  };
  positive(t.superframe, "superframe");
  positive(t.quiet, "quiet");
  positive(t.control, "control");
  positive(t.data, "data");
  positive(t.ack, "ack");
  positive(t.wait, "wait");
  positive(t.detect_interval, "detect_interval");
  if (t.quiet + t.control > t.superframe) {
    throw Error("timing: quiet + control exceeds the superframe; no user fits");
  }
  if (t.nus() > t.quiet) {
    throw Error("timing: the NUS (2 x control) must fit inside the quiet window");
  }
}

int capacity_max_users(const FrameTiming& t) {
  return static_cast<int>((t.superframe - t.quiet) / t.control);
}

int capacity_max_data_slots(const FrameTiming& t, int n_users) {
  const Duration left = t.superframe - t.quiet - n_users * t.control;
  if (left < Duration::zero()) return 0;
  return static_cast<int>(left / t.data_slot_cost());
}

// ---------------------------------------------------------------------------

Indicator Packet::indicator() const {
  struct Visitor {
    Indicator operator()(const ControlBody&) const { return Indicator::Control; }
    Indicator operator()(const DataBody&) const { return Indicator::Data; }
    Indicator operator()(const ChannelControlBody&) const { return Indicator::ChannelControl; }
    Indicator operator()(const AckBody& a) const {
      return a.acked_kind == AckedKind::Data ? Indicator::DataAck : Indicator::ChannelControlAck;
    }
  };
  return std::visit(Visitor{}, body);
}

std::string to_string(Indicator indicator) {
  switch (indicator) {
    case Indicator::Control: return "control";
    case Indicator::Data: return "data";
    case Indicator::ChannelControl: return "channel-control";
    case Indicator::DataAck: return "ack";
    case Indicator::ChannelControlAck: return "channel-control-ack";
  }
  return "unknown";
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v & 0xFFFF));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>((in_[pos_] << 8) | in_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    const std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw DecodeError("truncated packet");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

constexpr std::uint16_t kNoChannel = 0xFFFF;

}  // namespace

std::vector<std::uint8_t> encode_packet(const Packet& p) {
  Writer w;
  const auto ind = static_cast<std::uint16_t>(p.indicator());
  w.u16(static_cast<std::uint16_t>((ind << 12) | kSyncWord));
  w.u16(p.source.value);
  w.u16(p.dest.value);
  w.u16(p.tx_power_mw);
  std::visit(
      [&w](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ControlBody>) {
          w.u8(b.priority_index);
          w.u16(b.slots_requested);
        } else if constexpr (std::is_same_v<T, DataBody>) {
          w.u32(b.payload_len);
        } else if constexpr (std::is_same_v<T, ChannelControlBody>) {
          if (b.channel_list.size() > 0xFF) throw Error("channel list too long to encode");
          w.u8(static_cast<std::uint8_t>(b.channel_list.size()));
          for (ChannelId c : b.channel_list) w.u16(c.value);
        } else {
          if (b.acked_kind == AckedKind::ChannelControl) {
            w.u16(b.agreed_channel ? b.agreed_channel->value : kNoChannel);
          }
        }
      },
      p.body);
  return w.take();
}

Packet decode_packet(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint16_t head = r.u16();
  const auto code = static_cast<std::uint8_t>(head >> 12);
  if ((head & 0x0FFF) != kSyncWord) throw DecodeError("bad sync word");

  Packet p;
  p.source = NodeId{r.u16()};
  p.dest = NodeId{r.u16()};
  p.tx_power_mw = r.u16();
  if (p.tx_power_mw == 0) throw DecodeError("tx power must be positive");

  switch (code) {
    case static_cast<std::uint8_t>(Indicator::Control): {
      ControlBody b;
      b.priority_index = r.u8();
      b.slots_requested = r.u16();
      if (b.priority_index > kMaxPriorityIndex) throw DecodeError("priority index out of range");
      p.body = b;
      break;
    }
    case static_cast<std::uint8_t>(Indicator::Data):
      p.body = DataBody{r.u32()};
      break;
    case static_cast<std::uint8_t>(Indicator::ChannelControl): {
      ChannelControlBody b;
      const std::uint8_t n = r.u8();
      for (int i = 0; i < n; ++i) b.channel_list.push_back(ChannelId{r.u16()});
      p.body = std::move(b);
      break;
    }
    case static_cast<std::uint8_t>(Indicator::DataAck):
      p.body = AckBody{AckedKind::Data, std::nullopt};
      break;
    case static_cast<std::uint8_t>(Indicator::ChannelControlAck): {
      AckBody b{AckedKind::ChannelControl, std::nullopt};
      const std::uint16_t c = r.u16();
      if (c != kNoChannel) b.agreed_channel = ChannelId{c};
      p.body = b;
      break;
    }
    default:
      throw DecodeError("unknown indicator");
  }
  if (!r.done()) throw DecodeError("trailing bytes after packet body");
  return p;
}

// ---------------------------------------------------------------------------

bool CusRegistry::contains(NodeId node) const {
  return std::find(members_.begin(), members_.end(), node) != members_.end();
}

std::optional<int> CusRegistry::position_of(NodeId node) const {
  const auto it = std::find(members_.begin(), members_.end(), node);
  if (it == members_.end()) return std::nullopt;
  return static_cast<int>(it - members_.begin());
}

void CusRegistry::append(NodeId node, std::uint64_t superframe) {
  if (contains(node)) throw Error("registry: node already registered");
  if (full()) throw Error("registry: channel at capacity");
  members_.push_back(node);
  last_heard_[node] = superframe;
}

void CusRegistry::mark_heard(NodeId node, std::uint64_t superframe) {
  if (contains(node)) last_heard_[node] = superframe;
}

std::optional<std::uint64_t> CusRegistry::last_heard(NodeId node) const {
  const auto it = last_heard_.find(node);
  if (it == last_heard_.end()) return std::nullopt;
  return it->second;
}

void CusRegistry::heal(std::span<const NodeId> silent) {
  const auto is_silent = [&](NodeId n) {
    return std::find(silent.begin(), silent.end(), n) != silent.end();
  };
  std::erase_if(members_, is_silent);
  for (NodeId n : silent) last_heard_.erase(n);
}

void CusRegistry::clear() {
  members_.clear();
  last_heard_.clear();
}

}  // namespace dsat
