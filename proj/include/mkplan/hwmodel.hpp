#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "mkplan/micro_op.hpp"

namespace mkplan {

struct StageOverhead {
  std::uint64_t instr_buf = 2048;
  std::uint64_t semaphores = 512;
  std::uint64_t scratch = 1536;

  std::uint64_t total() const { return instr_buf + semaphores + scratch; }
  friend bool operator==(const StageOverhead&, const StageOverhead&) = default;
};

using LatencyTable = std::array<std::uint32_t, kNumKinds>;

LatencyTable default_latency_table();

struct HardwareSpec {
  std::uint64_t smem_max = 131072;
  std::uint64_t page_size = 16384;
  StageOverhead overhead;
  std::uint32_t warps_per_sm = 32;
  std::uint32_t banks = 32;
  std::uint32_t lane_width = 32;
  std::uint32_t issue_width = 1;
  LatencyTable latency = default_latency_table();

  std::uint32_t latency_of(MicroOpKind kind) const {
    return latency[static_cast<std::size_t>(kind)];
  }

  // Throws ConfigError on the first violated invariant.
  void validate() const;

  friend bool operator==(const HardwareSpec&, const HardwareSpec&) = default;
};

struct PageBudget {
  std::uint64_t n_page_total = 0;
  std::uint64_t n_page_weight = 0;
  std::uint64_t n_page_scale = 0;
  std::uint64_t n_page_act = 0;
  std::uint64_t n_page_per_stage = 1;
  std::uint64_t n_stage = 0;
};

struct AccessPattern {
  std::uint32_t element_bytes = 4;
  std::uint32_t stride_elements = 1;
  std::uint32_t lanes = 32;
  std::uint32_t swizzle = 0;
};

/// Pages left after reserving per-stage instruction, semaphore and scratch
/// space: floor((smem_max - n_stage * overhead) / page_size), clamped at 0.
std::uint64_t compute_page_budget(const HardwareSpec& spec, std::uint64_t n_stage);

/// Pipeline depth supported by the pages left once weights, scales and
/// activations are resident. Clamps to 0 when nothing is left; throws
/// ConfigError when n_page_per_stage is 0.
std::uint64_t compute_stage_count(std::uint64_t n_page_total,
                                  std::uint64_t n_page_weight,
                                  std::uint64_t n_page_scale,
                                  std::uint64_t n_page_act,
                                  std::uint64_t n_page_per_stage);

inline std::uint64_t compute_stage_count(const PageBudget& b) {
  return compute_stage_count(b.n_page_total, b.n_page_weight, b.n_page_scale,
                             b.n_page_act, b.n_page_per_stage);
}

/// Bank index of a 4-byte shared-memory word under an XOR swizzle. The
/// swizzle mask selects which row bits (word / banks) are folded into the
/// bank bits; a zero mask is the identity layout.
std::uint64_t swizzled_bank(std::uint64_t word, std::uint32_t swizzle,
                            std::uint32_t banks);

/// Worst-case number of lanes that land on one bank for a single warp-wide
/// access. 1 means conflict free.
std::uint32_t bank_conflict_factor(const AccessPattern& pattern,
                                   const HardwareSpec& spec);

bool is_shared_memory_access(MicroOpKind kind);

std::uint64_t micro_op_cost(MicroOpKind kind, const HardwareSpec& spec,
                            std::uint32_t conflict = 1);

inline std::uint64_t micro_op_cost(const MicroOp& op, const HardwareSpec& spec,
                                   std::uint32_t conflict = 1) {
  return micro_op_cost(op.kind, spec, conflict);
}

}  // namespace mkplan
