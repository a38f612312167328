#pragma once

// Shared domain types for the DSAT-MAC simulator: strong identifiers, frame
// timing arithmetic, the packet model with its wire format, and the ordered
// current-user-slot registry every node keeps for its channel.

#include <chrono>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dsat {

/// All simulated time is integer microseconds.
using Duration = std::chrono::microseconds;
using SimTime = std::chrono::microseconds;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

struct NodeId {
  std::uint16_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

struct ChannelId {
  std::uint16_t value = 0;
  auto operator<=>(const ChannelId&) const = default;
};

struct FlowId {
  std::uint16_t value = 0;
  auto operator<=>(const FlowId&) const = default;
};

inline constexpr NodeId kBroadcast{0xFFFF};

// ---------------------------------------------------------------------------
// Frame timing

/// Timing constants of one channel's superframe. The NUS is always two
/// control-slot widths and is not a separate field.
struct FrameTiming {
  Duration superframe{};       ///< T_s
  Duration quiet{};            ///< T_q
  Duration control{};          ///< T_c, one CUS
  Duration data{};             ///< T_d, one data slot
  Duration ack{};              ///< T_a, one ack slot
  Duration wait{};             ///< T_w, PU-blocked channel wait before switching
  Duration detect_interval{};  ///< re-sensing period while the PU is present

  Duration nus() const { return 2 * control; }
  Duration data_slot_cost() const { return data + ack; }

  bool operator==(const FrameTiming&) const = default;
};

/// Throws Error when a duration is non-positive, the quiet period plus one
/// CUS does not fit in the superframe, or the NUS does not fit in the quiet
/// window.
void validate(const FrameTiming& timing);

/// Largest N with quiet + N * control <= superframe.
int capacity_max_users(const FrameTiming& timing);

/// Largest M with quiet + n_users * control + M * (data + ack) <= superframe.
int capacity_max_data_slots(const FrameTiming& timing, int n_users);

// ---------------------------------------------------------------------------
// Packets

/// Four-bit packet type codes.
enum class Indicator : std::uint8_t {
  Control = 0b0000,
  Data = 0b0001,
  ChannelControl = 0b0010,
  DataAck = 0b1001,
  ChannelControlAck = 0b1010,
};

inline constexpr std::uint16_t kSyncWord = 0xACE;
inline constexpr int kMaxPriorityIndex = 21;

enum class AckedKind : std::uint8_t { Data, ChannelControl };

struct ControlBody {
  std::uint8_t priority_index = 0;
  std::uint16_t slots_requested = 0;
  bool operator==(const ControlBody&) const = default;
};

struct DataBody {
  std::uint32_t payload_len = 0;
  bool operator==(const DataBody&) const = default;
};

/// Acks to channel-control packets carry the receiver's chosen channel
/// (nullopt when the vacant lists do not intersect).
struct AckBody {
  AckedKind acked_kind = AckedKind::Data;
  std::optional<ChannelId> agreed_channel;
  bool operator==(const AckBody&) const = default;
};

struct ChannelControlBody {
  std::vector<ChannelId> channel_list;
  bool operator==(const ChannelControlBody&) const = default;
};

using PacketBody = std::variant<ControlBody, DataBody, AckBody, ChannelControlBody>;

/// A MAC packet. The indicator is derived from the body so the two can
/// never disagree.
struct Packet {
  NodeId source;
  NodeId dest = kBroadcast;
  std::uint16_t tx_power_mw = 1;
  PacketBody body;

  Indicator indicator() const;
  bool operator==(const Packet&) const = default;
};

std::string to_string(Indicator indicator);

/// Byte layout (big-endian):
///   [4-bit indicator][12-bit sync 0xACE][u16 source][u16 dest][u16 tx_power mW][body]
/// Bodies:
///   Control            u8 priority_index, u16 slots_requested
///   Data               u32 payload_len
///   ChannelControl     u8 count, count x u16 channel id
///   DataAck            (empty)
///   ChannelControlAck  u16 agreed channel (0xFFFF = none)
std::vector<std::uint8_t> encode_packet(const Packet& packet);

/// Throws DecodeError on unknown indicators, a bad sync word, truncated or
/// over-long input, and field values outside their invariants.
Packet decode_packet(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// CUS registry

/// Ordered list of registered nodes on one channel; index = CUS position.
class CusRegistry {
 public:
  explicit CusRegistry(int capacity = 0) : capacity_(capacity) {}

  int size() const { return static_cast<int>(members_.size()); }
  int capacity() const { return capacity_; }
  bool empty() const { return members_.empty(); }
  bool full() const { return size() >= capacity_; }
  bool contains(NodeId node) const;
  std::optional<int> position_of(NodeId node) const;
  NodeId at(int position) const { return members_.at(static_cast<std::size_t>(position)); }
  const std::vector<NodeId>& members() const { return members_; }

  /// Appends at the next vacant position. Throws Error on duplicates or
  /// when the registry is at capacity.
  void append(NodeId node, std::uint64_t superframe);
  void mark_heard(NodeId node, std::uint64_t superframe);
  std::optional<std::uint64_t> last_heard(NodeId node) const;

  /// Removes every listed node; survivors keep their relative order and
  /// shift down to close the gaps.
  void heal(std::span<const NodeId> silent);
  void set_capacity(int capacity) { capacity_ = capacity; }
  void clear();

  bool operator==(const CusRegistry&) const = default;

 private:
  int capacity_ = 0;
  std::vector<NodeId> members_;
  std::map<NodeId, std::uint64_t> last_heard_;
};

}  // namespace dsat
