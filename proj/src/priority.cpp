#include "dsat/priority.hpp"

#include "dsat/core.hpp"

namespace dsat {

std::string_view to_string(DataType type) {
  switch (type) {
    case DataType::TextFile: return "text";
    case DataType::RealTimeAV: return "av";
    case DataType::ControlData: return "control";
    case DataType::SafetyCritical: return "safety";
  }
  return "text";
}

std::optional<DataType> parse_data_type(std::string_view text) {
  if (text == "text") return DataType::TextFile;
  if (text == "av") return DataType::RealTimeAV;
  if (text == "control") return DataType::ControlData;
  if (text == "safety") return DataType::SafetyCritical;
  return std::nullopt;
}

int sub_priority_dt(DataType type) {
  return static_cast<int>(type);
}

int sub_priority_ql(int queue_length) {
  if (queue_length < 0) throw Error("queue length must be non-negative");
  if (queue_length <= 5) return 0;
  if (queue_length <= 10) return 1;
  if (queue_length <= 20) return 2;
  return 3;
}

int sub_priority_pd(int head_delay) {
  if (head_delay < 0) throw Error("head delay must be non-negative");
  if (head_delay < 2) return 0;
  if (head_delay <= 5) return 1;
  if (head_delay <= 10) return 2;
  return 3;
}

int priority_index(const PriorityInputs& in) {
  return 3 * sub_priority_dt(in.data_type) + sub_priority_ql(in.queue_length) +
         3 * sub_priority_pd(in.head_delay);
}

}  // namespace dsat
