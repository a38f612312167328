#pragma once

// Priority Index Calculator: PI = 3*DT + QL + 3*PD, each sub-priority in 0..3.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dsat {

enum class DataType : std::uint8_t { TextFile, RealTimeAV, ControlData, SafetyCritical };

std::string_view to_string(DataType type);
std::optional<DataType> parse_data_type(std::string_view text);

struct PriorityInputs {
  DataType data_type = DataType::TextFile;
  int queue_length = 0;  ///< packets
  int head_delay = 0;    ///< superframes waited by the oldest queued packet
};

int sub_priority_dt(DataType type);

/// Band edges shared between rows go to the lower band: 0-5 -> 0, 6-10 -> 1,
/// 11-20 -> 2, >20 -> 3. An empty queue is band 0.
int sub_priority_ql(int queue_length);

/// <2 -> 0, 2-5 -> 1, 6-10 -> 2, >10 -> 3.
int sub_priority_pd(int head_delay);

int priority_index(const PriorityInputs& inputs);

}  // namespace dsat
