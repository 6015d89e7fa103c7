#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mkplan/graph_ir.hpp"
#include "mkplan/hwmodel.hpp"
#include "mkplan/plan.hpp"
#include "mkplan/simulator.hpp"

namespace mkplan {

inline constexpr int kTraceFormatVersion = 1;
inline constexpr std::string_view kToolVersion = "mkplan 0.1.0";

struct SearchOptions {
  std::size_t budget = 10000;  // max simulations, pass variants included
  bool parallel = true;
  unsigned threads = 0;        // 0: MK_PLANNER_THREADS, else machine parallelism
  bool keep_scores = false;    // retain every simulated score (debug)
};

struct ScoredKnobs {
  PlanKnobs knobs;
  std::uint64_t productive = 0;
  std::uint64_t makespan = 0;
  double duty_cycle() const {
    return makespan == 0 ? 0.0 : static_cast<double>(productive) / static_cast<double>(makespan);
  }
};

/// Total order used to pick winners: higher duty cycle, then lower
/// makespan, then the smaller encoding. Duty cycles compare exactly.
bool better(const ScoredKnobs& a, const ScoredKnobs& b);

struct SearchStats {
  std::size_t enumerated = 0;  // space points visited
  std::size_t feasible = 0;    // survived resource_filter
  std::size_t simulated = 0;   // simulations charged to the budget
  std::array<std::size_t, 4> pruned{};  // by PruneReason
  friend bool operator==(const SearchStats&, const SearchStats&) = default;
};

struct SearchResult {
  PlanCandidate winner;
  SimReport report;
  SearchStats stats;
  std::vector<ScoredKnobs> scores;  // only with keep_scores, in evaluation order
};

/// Budgeted exhaustive search. Candidates are visited in enumeration order;
/// every feasible one is simulated together with its gap-fill and
/// role-rebalance variants until the budget runs out. The outcome does not
/// depend on whether evaluation runs in parallel.
SearchResult run_search(const OperatorGraph& graph, const HardwareSpec& spec,
                        const SearchSpace& space, const SearchOptions& options = {});

unsigned planner_threads();  // MK_PLANNER_THREADS or machine parallelism

struct TraceHeader {
  std::string graph_hash;
  std::string hw_hash;
  std::string space_hash;
  std::string tool_version;
  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct TraceOp {
  OpId id = 0;
  MicroOpKind kind = MicroOpKind::MmaTile;
  std::uint32_t source_operator = 0;
  TileCoord tile;
  std::vector<std::uint32_t> pages;
  std::uint64_t start = 0;
  std::uint64_t complete = 0;
  friend bool operator==(const TraceOp&, const TraceOp&) = default;
};

struct TraceScore {
  std::uint64_t makespan = 0;
  std::uint64_t productive = 0;
  std::array<std::uint64_t, kNumStallReasons> stalls{};
  double duty_cycle() const {
    return makespan == 0 ? 0.0 : static_cast<double>(productive) / static_cast<double>(makespan);
  }
  friend bool operator==(const TraceScore&, const TraceScore&) = default;
};

struct SolidifiedTrace {
  int format_version = kTraceFormatVersion;
  TraceHeader header;
  PlanKnobs plan;
  PagePlan pages;
  std::array<std::vector<TraceOp>, kNumRoles> roles;
  TraceScore score;
  SearchStats stats;
  friend bool operator==(const SolidifiedTrace&, const SolidifiedTrace&) = default;
};

std::string sha256_hex(std::string_view bytes);
std::string graph_hash(const OperatorGraph& graph);
std::string hw_hash(const HardwareSpec& spec);
std::string space_hash(const SearchSpace& space);

SolidifiedTrace solidify(const PlanCandidate& candidate, const SimReport& report,
                         const SearchStats& stats, const TraceHeader& header);

SolidifiedTrace solidify(const SearchResult& result, const OperatorGraph& graph,
                         const HardwareSpec& spec, const SearchSpace& space);

/// Canonical JSON (sorted keys, fixed indentation) with a SHA-256
/// content_hash over the document without that field.
std::string serialize_trace(const SolidifiedTrace& trace);

/// Rejects malformed input with the offending path (ParseError), other
/// format versions and content-hash mismatches (ValidationError).
SolidifiedTrace parse_trace(std::string_view bytes);

/// Header hashes match the given inputs and re-simulating the embedded plan
/// reproduces the embedded schedule and score exactly. Returns the first
/// mismatch, empty when consistent.
std::string verify_trace(const SolidifiedTrace& trace, const OperatorGraph& graph,
                         const HardwareSpec& spec);

struct FieldDiff {
  std::string field;
  std::string a;
  std::string b;
};

/// Field-wise differences in score, stage settings, role maps and page
/// plans. Throws ValidationError when the graph hashes differ.
std::vector<FieldDiff> compare_traces(const SolidifiedTrace& a, const SolidifiedTrace& b);

}  // namespace mkplan
