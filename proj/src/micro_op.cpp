#include "mkplan/micro_op.hpp"

#include "mkplan/error.hpp"

namespace mkplan {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingInput: return "MissingInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::NoFeasibleCandidate: return "NoFeasibleCandidate";
    case ErrorKind::InternalDeadlock: return "InternalDeadlock";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::string_view to_string(MicroOpKind kind) {
  switch (kind) {
    case MicroOpKind::GlobalToShared: return "GlobalToShared";
    case MicroOpKind::LoadSharedToReg: return "LoadSharedToReg";
    case MicroOpKind::Dequant: return "Dequant";
    case MicroOpKind::MmaTile: return "MmaTile";
    case MicroOpKind::Epilogue: return "Epilogue";
    case MicroOpKind::Reduce: return "Reduce";
    case MicroOpKind::RegToGlobal: return "RegToGlobal";
  }
  return "?";
}

std::optional<MicroOpKind> parse_kind(std::string_view name) {
  for (auto k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Space space) {
  switch (space) {
    case Space::Global: return "Global";
    case Space::SharedPage: return "SharedPage";
    case Space::Register: return "Register";
  }
  return "?";
}

std::optional<Space> parse_space(std::string_view name) {
  if (name == "Global") return Space::Global;
  if (name == "SharedPage") return Space::SharedPage;
  if (name == "Register") return Space::Register;
  return std::nullopt;
}

BufferId MicroOpTrace::intern(const std::string& name, Space space,
                              std::uint64_t bytes) {
  if (auto id = find(name)) {
    auto& info = buffers[*id];
    if (bytes > info.bytes) info.bytes = bytes;
    return *id;
  }
  buffers.push_back(BufferInfo{name, space, bytes});
  return static_cast<BufferId>(buffers.size() - 1);
}

std::optional<BufferId> MicroOpTrace::find(std::string_view name) const {
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    if (buffers[i].name == name) return static_cast<BufferId>(i);
  }
  return std::nullopt;
}

std::array<std::size_t, kNumKinds> MicroOpTrace::count_by_kind() const {
  std::array<std::size_t, kNumKinds> counts{};
  for (const auto& op : ops) ++counts[static_cast<std::size_t>(op.kind)];
  return counts;
}

void MicroOpTrace::renumber() {
  for (std::size_t i = 0; i < ops.size(); ++i) ops[i].id = static_cast<OpId>(i);
}

}  // namespace mkplan
