#include "mkplan/depgraph.hpp"

#include <algorithm>
#include <map>
#include <queue>

#include "mkplan/error.hpp"

namespace mkplan {

DepGraph::DepGraph(std::size_t nodes, std::vector<RawEdge> raw, std::vector<WarConstraint> war)
    : raw_(std::move(raw)), war_(std::move(war)), preds_(nodes), succs_(nodes) {
  for (const auto& e : raw_) {
    if (e.producer >= nodes || e.consumer >= nodes)
      fail(ErrorKind::ValidationError, "edge references unknown node");
    preds_[e.consumer].push_back(e.producer);
    succs_[e.producer].push_back(e.consumer);
  }
  for (auto* lists : {&preds_, &succs_}) {
    for (auto& l : *lists) {
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
    }
  }
}

std::vector<OpId> DepGraph::topological_order() const {
  std::vector<std::size_t> indeg(size());
  for (std::size_t v = 0; v < size(); ++v) indeg[v] = preds_[v].size();
  std::priority_queue<OpId, std::vector<OpId>, std::greater<>> ready;
  for (std::size_t v = 0; v < size(); ++v)
    if (indeg[v] == 0) ready.push(static_cast<OpId>(v));
  std::vector<OpId> order;
  order.reserve(size());
  while (!ready.empty()) {
    const OpId v = ready.top();
    ready.pop();
    order.push_back(v);
    for (OpId s : succs_[v])
      if (--indeg[s] == 0) ready.push(s);
  }
  if (order.size() != size()) fail(ErrorKind::ValidationError, "dependency graph has a cycle");
  return order;
}

std::vector<std::pair<OpId, OpId>> DepGraph::edge_pairs() const {
  std::vector<std::pair<OpId, OpId>> out;
  for (std::size_t v = 0; v < size(); ++v)
    for (OpId s : succs_[v]) out.emplace_back(static_cast<OpId>(v), s);
  return out;
}

namespace {

// Non-overlapping segments [start, end) -> owner, keyed by start.
class SegmentMap {
 public:
  struct Seg {
    std::uint64_t end;
    OpId owner;
  };

  template <typename F>
  void for_overlaps(std::uint64_t lo, std::uint64_t hi, F&& f) const {
    auto it = segs_.upper_bound(lo);
    if (it != segs_.begin()) --it;
    for (; it != segs_.end() && it->first < hi; ++it) {
      if (it->second.end <= lo) continue;
      f(std::max(lo, it->first), std::min(hi, it->second.end), it->second.owner);
    }
  }

  void assign(std::uint64_t lo, std::uint64_t hi, OpId owner) {
    erase(lo, hi);
    segs_.emplace(lo, Seg{hi, owner});
  }

  void erase(std::uint64_t lo, std::uint64_t hi) {
    auto it = segs_.upper_bound(lo);
    if (it != segs_.begin()) --it;
    while (it != segs_.end() && it->first < hi) {
      const std::uint64_t s = it->first;
      const Seg seg = it->second;
      if (seg.end <= lo) {
        ++it;
        continue;
      }
      it = segs_.erase(it);
      if (s < lo) segs_.emplace(s, Seg{lo, seg.owner});
      if (seg.end > hi) it = segs_.emplace(hi, Seg{seg.end, seg.owner}).first;
    }
  }

 private:
  std::map<std::uint64_t, Seg> segs_;
};

}  // namespace

DepGraph build_dep_graph(const MicroOpTrace& trace) {
  std::vector<SegmentMap> last_writer(trace.buffers.size());
  // Readers of shared-page bytes since the last write, for WAR bookkeeping.
  std::vector<std::vector<std::pair<BufferInterval, OpId>>> readers(trace.buffers.size());
  std::vector<RawEdge> raw;
  std::vector<WarConstraint> war;

  for (std::size_t i = 0; i < trace.ops.size(); ++i) {
    const auto& op = trace.ops[i];
    if (op.id != i) fail(ErrorKind::ValidationError, "trace ids must be dense and program ordered");
    std::vector<OpId> seen;
    for (const auto& r : op.reads) {
      last_writer.at(r.buffer).for_overlaps(r.offset, r.end(),
                                            [&](std::uint64_t lo, std::uint64_t hi, OpId w) {
        if (w == op.id || std::find(seen.begin(), seen.end(), w) != seen.end()) return;
        seen.push_back(w);
        raw.push_back({w, op.id, BufferInterval{r.buffer, lo, hi - lo, r.space}});
      });
      if (r.space == Space::SharedPage) readers[r.buffer].push_back({r, op.id});
    }
    std::vector<OpId> war_seen;
    for (const auto& w : op.writes) {
      if (w.space == Space::SharedPage) {
        auto& list = readers[w.buffer];
        std::vector<std::pair<BufferInterval, OpId>> keep;
        for (const auto& [iv, reader] : list) {
          if (!iv.overlaps(w)) {
            keep.push_back({iv, reader});
            continue;
          }
          if (reader != op.id &&
              std::find(war_seen.begin(), war_seen.end(), reader) == war_seen.end()) {
            war_seen.push_back(reader);
            war.push_back({reader, op.id});
          }
          // Bytes outside the overwrite stay live for later writers.
          if (iv.offset < w.offset)
            keep.push_back({BufferInterval{iv.buffer, iv.offset, w.offset - iv.offset, iv.space}, reader});
          if (iv.end() > w.end())
            keep.push_back({BufferInterval{iv.buffer, w.end(), iv.end() - w.end(), iv.space}, reader});
        }
        list = std::move(keep);
      }
      last_writer.at(w.buffer).assign(w.offset, w.end(), op.id);
    }
  }
  std::sort(war.begin(), war.end());
  return DepGraph(trace.ops.size(), std::move(raw), std::move(war));
}

CriticalPath critical_path(const DepGraph& graph, std::span<const std::uint64_t> cost) {
  const auto order = graph.topological_order();
  CriticalPath out;
  if (order.empty()) return out;
  // tail[v]: longest path starting at v, including v.
  std::vector<std::uint64_t> tail(graph.size(), 0);
  std::vector<OpId> next(graph.size(), static_cast<OpId>(-1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const OpId v = *it;
    std::uint64_t best = 0;
    for (OpId s : graph.succs(v)) {  // succs are sorted, first max wins ties
      if (next[v] == static_cast<OpId>(-1) || tail[s] > best) {
        best = tail[s];
        next[v] = s;
      }
    }
    tail[v] = cost[v] + best;
  }
  OpId start = 0;
  for (std::size_t v = 0; v < graph.size(); ++v)
    if (tail[v] > tail[start]) start = static_cast<OpId>(v);
  out.length = tail[start];
  for (OpId v = start; v != static_cast<OpId>(-1); v = next[v]) out.nodes.push_back(v);
  return out;
}

std::vector<std::uint64_t> node_slack(const DepGraph& graph, std::span<const std::uint64_t> cost) {
  const auto order = graph.topological_order();
  const std::size_t n = graph.size();
  std::vector<std::uint64_t> asap(n, 0), alap(n, 0), slack(n, 0);
  std::uint64_t makespan = 0;
  for (OpId v : order) {
    for (OpId p : graph.preds(v)) asap[v] = std::max(asap[v], asap[p] + cost[p]);
    makespan = std::max(makespan, asap[v] + cost[v]);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const OpId v = *it;
    std::uint64_t latest_finish = makespan;
    for (OpId s : graph.succs(v)) latest_finish = std::min(latest_finish, alap[s]);
    alap[v] = latest_finish - cost[v];
    slack[v] = alap[v] - asap[v];
  }
  return slack;
}

SplitResult split_reduction(const DepGraph& graph, const MicroOpTrace& trace) {
  SplitResult out{graph, trace, 0};
  const std::size_t n = trace.ops.size();
  std::vector<std::vector<MicroOp>> after(n);   // partials to insert after position p
  std::vector<std::vector<MicroOp>> before(n);  // partials without producer
  std::vector<std::optional<MicroOp>> replace(n);

  // producers of each read interval, from the RAW witnesses
  std::vector<std::vector<const RawEdge*>> in_edges(n);
  for (const auto& e : graph.raw_edges()) in_edges[e.consumer].push_back(&e);

  MicroOpTrace result = trace;
  BufferId partial_buf = 0;
  std::uint64_t partial_off = 0;
  bool have_buf = false;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& op = trace.ops[i];
    if (op.kind != MicroOpKind::Reduce) continue;
    std::vector<BufferInterval> inputs, accum;
    for (const auto& r : op.reads) {
      const bool self = std::any_of(op.writes.begin(), op.writes.end(),
                                    [&](const BufferInterval& w) { return w.overlaps(r); });
      (self ? accum : inputs).push_back(r);
    }
    if (inputs.size() < 2) continue;
    if (!have_buf) {
      partial_buf = result.intern("reduce.partial", Space::Register, 0);
      have_buf = true;
    }
    std::uint64_t write_len = 0;
    for (const auto& w : op.writes) write_len += w.length;
    MicroOp combine = op;
    combine.reads = accum;
    for (const auto& in : inputs) {
      MicroOp part;
      part.kind = MicroOpKind::Reduce;
      part.tile = op.tile;
      part.source_operator = op.source_operator;
      part.reads = {in};
      const BufferInterval pw{partial_buf, partial_off, write_len, Space::Register};
      partial_off += write_len;
      part.writes = {pw};
      combine.reads.push_back(pw);
      std::optional<OpId> last;
      for (const RawEdge* e : in_edges[i])
        if (e->witness.overlaps(in)) last = std::max(last.value_or(0), e->producer);
      if (last)
        after[*last].push_back(std::move(part));
      else
        before[i].push_back(std::move(part));
    }
    replace[i] = std::move(combine);
    ++out.reductions_split;
  }
  if (out.reductions_split == 0) return out;
  result.buffers[partial_buf].bytes = partial_off;

  result.ops.clear();
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& p : before[i]) result.ops.push_back(std::move(p));
    result.ops.push_back(replace[i] ? *replace[i] : trace.ops[i]);
    for (auto& p : after[i]) result.ops.push_back(std::move(p));
  }
  result.renumber();
  out.graph = build_dep_graph(result);
  out.trace = std::move(result);
  return out;
}

}  // namespace mkplan
