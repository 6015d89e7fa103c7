#pragma once

#include "mkplan/graph_ir.hpp"
#include "mkplan/hwmodel.hpp"
#include "mkplan/plan.hpp"
#include "mkplan/simulator.hpp"

namespace mkplan {

struct PassResult {
  PlanCandidate candidate;
  SimReport report;
  bool applied = false;   // false: identity, candidate and report are the inputs
  bool simulated = false; // a variant was simulated (counts against a budget)
  std::size_t changed = 0;
};

/// Hoists positive-slack ops into idle issue gaps of their own role. An op
/// only moves in front of an op that started strictly after everything it
/// waits for had completed, so the new issue orders keep every dependency.
/// No acceptance test: the caller decides.
PlanCandidate gap_fill_reorder(const PlanCandidate& candidate, const SimReport& report,
                               const HardwareSpec& spec, std::size_t* moved = nullptr);

/// Moves INT4 dequantization onto the Loader: each Dequant rewrites its
/// staged weight tile in shared memory right after the prefetch, and the
/// Loader issues it behind the prefetch `prefetch_stride` fills later.
PlanCandidate role_rebalance_rewrite(const PlanCandidate& candidate, const HardwareSpec& spec,
                                     std::size_t* moved = nullptr);

/// Applies the reorder, re-simulates and keeps it only if the makespan did
/// not grow.
PassResult apply_gap_fill(const PlanCandidate& candidate, const SimReport& report,
                          const HardwareSpec& spec);

/// Rebalances only when the Loader idles more than `threshold` of the
/// makespan, the Consumer is the busiest role and the trace dequantizes.
/// Kept only if the makespan did not grow.
PassResult apply_role_rebalance(const PlanCandidate& candidate, const SimReport& report,
                                const HardwareSpec& spec, double threshold = 0.3);

/// Deterministically reconstructs the candidate a knob set describes,
/// including any pass variants it names.
PlanCandidate rebuild_candidate(const OperatorGraph& graph, const HardwareSpec& spec,
                                const PlanKnobs& knobs);

}  // namespace mkplan
