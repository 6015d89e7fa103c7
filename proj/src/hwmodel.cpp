#include "mkplan/hwmodel.hpp"

#include <algorithm>
#include <vector>

#include "mkplan/error.hpp"

namespace mkplan {

LatencyTable default_latency_table() {
  LatencyTable t{};
  auto set = [&](MicroOpKind k, std::uint32_t v) {
    t[static_cast<std::size_t>(k)] = v;
  };
  set(MicroOpKind::GlobalToShared, 64);
  set(MicroOpKind::LoadSharedToReg, 8);
  set(MicroOpKind::Dequant, 4);
  set(MicroOpKind::MmaTile, 16);
  set(MicroOpKind::Epilogue, 4);
  set(MicroOpKind::Reduce, 8);
  set(MicroOpKind::RegToGlobal, 48);
  return t;
}

void HardwareSpec::validate() const {
  if (smem_max == 0) fail(ErrorKind::ConfigError, "smem_max must be > 0");
  if (page_size == 0) fail(ErrorKind::ConfigError, "page_size must be > 0");
  if (smem_max / page_size < 2)
    fail(ErrorKind::ConfigError, "page_size must fit into smem_max at least twice");
  if (banks == 0) fail(ErrorKind::ConfigError, "banks must be >= 1");
  if (lane_width == 0) fail(ErrorKind::ConfigError, "lane_width must be >= 1");
  if (warps_per_sm == 0) fail(ErrorKind::ConfigError, "warps_per_sm must be >= 1");
  if (issue_width == 0) fail(ErrorKind::ConfigError, "issue_width must be >= 1");
  for (auto k : kAllKinds) {
    if (latency_of(k) == 0)
      fail(ErrorKind::ConfigError,
           "latency for " + std::string(to_string(k)) + " must be >= 1");
  }
}

std::uint64_t compute_page_budget(const HardwareSpec& spec, std::uint64_t n_stage) {
  const std::uint64_t per_stage = spec.overhead.total();
  // n_stage * per_stage may exceed smem_max; compare before subtracting.
  if (per_stage != 0 && n_stage > spec.smem_max / per_stage) return 0;
  const std::uint64_t reserved = n_stage * per_stage;
  if (reserved >= spec.smem_max) return 0;
  return (spec.smem_max - reserved) / spec.page_size;
}

std::uint64_t compute_stage_count(std::uint64_t n_page_total,
                                  std::uint64_t n_page_weight,
                                  std::uint64_t n_page_scale,
                                  std::uint64_t n_page_act,
                                  std::uint64_t n_page_per_stage) {
  if (n_page_per_stage == 0)
    fail(ErrorKind::ConfigError, "n_page_per_stage must be >= 1");
  const std::uint64_t reserved = n_page_weight + n_page_scale + n_page_act;
  if (reserved >= n_page_total) return 0;
  return (n_page_total - reserved) / n_page_per_stage;
}

std::uint64_t swizzled_bank(std::uint64_t word, std::uint32_t swizzle,
                            std::uint32_t banks) {
  const std::uint64_t row = word / banks;
  const std::uint64_t permuted = word ^ (row & swizzle);
  return permuted % banks;
}

std::uint32_t bank_conflict_factor(const AccessPattern& pattern,
                                   const HardwareSpec& spec) {
  const std::uint32_t banks = spec.banks;
  std::vector<std::uint32_t> hits(banks, 0);
  std::uint32_t worst = 0;
  for (std::uint32_t lane = 0; lane < pattern.lanes; ++lane) {
    const std::uint64_t byte = std::uint64_t{lane} * pattern.stride_elements *
                               pattern.element_bytes;
    const std::uint64_t bank = swizzled_bank(byte / 4, pattern.swizzle, banks);
    worst = std::max(worst, ++hits[bank]);
  }
  return std::max<std::uint32_t>(worst, 1);
}

bool is_shared_memory_access(MicroOpKind kind) {
  return kind == MicroOpKind::LoadSharedToReg;
}

std::uint64_t micro_op_cost(MicroOpKind kind, const HardwareSpec& spec,
                            std::uint32_t conflict) {
  const auto idx = static_cast<std::size_t>(kind);
  if (idx >= kNumKinds || spec.latency[idx] == 0)
    fail(ErrorKind::ConfigError, "no latency entry for micro-op kind");
  std::uint64_t base = spec.latency[idx];
  if (is_shared_memory_access(kind)) base *= std::max<std::uint32_t>(conflict, 1);
  return base;
}

}  // namespace mkplan
