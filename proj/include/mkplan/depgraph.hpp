#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mkplan/micro_op.hpp"

namespace mkplan {

struct RawEdge {
  OpId producer = 0;
  OpId consumer = 0;
  BufferInterval witness;  // overlap of the producer's write and consumer's read
  friend bool operator==(const RawEdge&, const RawEdge&) = default;
};

struct WarConstraint {
  OpId reader = 0;
  OpId overwriter = 0;
  friend bool operator==(const WarConstraint&, const WarConstraint&) = default;
  friend auto operator<=>(const WarConstraint&, const WarConstraint&) = default;
};

// Immutable dependency DAG over a program-ordered trace.
class DepGraph {
 public:
  DepGraph() = default;
  DepGraph(std::size_t nodes, std::vector<RawEdge> raw, std::vector<WarConstraint> war);

  std::size_t size() const { return preds_.size(); }
  const std::vector<RawEdge>& raw_edges() const { return raw_; }
  const std::vector<WarConstraint>& war_constraints() const { return war_; }
  std::span<const OpId> preds(OpId node) const { return preds_[node]; }
  std::span<const OpId> succs(OpId node) const { return succs_[node]; }

  // Kahn order, smallest id first among ready nodes. Throws ValidationError
  // if the graph has a cycle.
  std::vector<OpId> topological_order() const;

  std::vector<std::pair<OpId, OpId>> edge_pairs() const;

 private:
  std::vector<RawEdge> raw_;
  std::vector<WarConstraint> war_;
  std::vector<std::vector<OpId>> preds_;
  std::vector<std::vector<OpId>> succs_;
};

/// Single forward pass with a per-buffer interval map of last writers. Reads
/// query overlapping writers (RAW); writes record earlier overlapping readers
/// of shared pages (WAR) and then replace the covered writer segments.
DepGraph build_dep_graph(const MicroOpTrace& trace);

struct CriticalPath {
  std::uint64_t length = 0;
  std::vector<OpId> nodes;
};

/// Longest path under node costs; ties resolve to the lexicographically
/// smallest id sequence.
CriticalPath critical_path(const DepGraph& graph, std::span<const std::uint64_t> cost);

/// ALAP start minus ASAP start with the makespan fixed to the critical path.
std::vector<std::uint64_t> node_slack(const DepGraph& graph,
                                      std::span<const std::uint64_t> cost);

struct SplitResult {
  DepGraph graph;
  MicroOpTrace trace;
  std::size_t reductions_split = 0;
};

/// Splits every Reduce that combines several producer paths into one partial
/// Reduce per path, placed right after that path's last producer, plus a
/// combining Reduce at the original position.
SplitResult split_reduction(const DepGraph& graph, const MicroOpTrace& trace);

}  // namespace mkplan
