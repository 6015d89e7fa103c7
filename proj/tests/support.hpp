#pragma once

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <utility>

#include "mkplan/depgraph.hpp"
#include "mkplan/graph_ir.hpp"
#include "mkplan/hwmodel.hpp"
#include "mkplan/io.hpp"
#include "mkplan/micro_op.hpp"

#ifndef MKPLAN_DATA_DIR
#define MKPLAN_DATA_DIR "data"
#endif

namespace mkplan::testing {

inline std::string data_path(const std::string& rel) { return std::string(MKPLAN_DATA_DIR) + "/" + rel; }
inline HardwareSpec hw(const std::string& name) { return load_hw_file(data_path("hw/" + name + ".json")); }
inline OperatorGraph graph(const std::string& name) { return load_graph_file(data_path("graphs/" + name + ".json")); }
inline SearchSpace space(const std::string& name) { return load_space_file(data_path("spaces/" + name + ".json")); }

// Random program-ordered trace over a few small buffers with overlapping
// reads and writes of arbitrary extent.
inline MicroOpTrace random_trace(std::mt19937_64& rng, std::size_t max_ops) {
  MicroOpTrace t;
  const std::size_t n_buf = 1 + rng() % 4;
  std::vector<std::uint64_t> sizes;
  for (std::size_t b = 0; b < n_buf; ++b) {
    sizes.push_back(8 + rng() % 120);
    t.intern("b" + std::to_string(b), b % 2 ? Space::SharedPage : Space::Global, sizes.back());
  }
  auto interval = [&] {
    const auto b = static_cast<BufferId>(rng() % n_buf);
    const std::uint64_t off = rng() % sizes[b];
    const std::uint64_t len = 1 + rng() % (sizes[b] - off);
    return BufferInterval{b, off, len, t.buffers[b].space};
  };
  const std::size_t n = 1 + rng() % max_ops;
  for (std::size_t i = 0; i < n; ++i) {
    MicroOp op;
    op.id = static_cast<OpId>(i);
    op.kind = static_cast<MicroOpKind>(rng() % kNumKinds);
    for (std::size_t r = rng() % 3; r > 0; --r) op.reads.push_back(interval());
    for (std::size_t w = rng() % 3; w > 0; --w) op.writes.push_back(interval());
    t.ops.push_back(std::move(op));
  }
  return t;
}

// O(n^2) reference: j depends on i < j when some byte j reads was last
// written (before j) by i.
inline std::set<std::pair<OpId, OpId>> brute_force_raw(const MicroOpTrace& t) {
  std::set<std::pair<OpId, OpId>> out;
  for (std::size_t j = 0; j < t.ops.size(); ++j)
    for (const auto& r : t.ops[j].reads)
      for (std::uint64_t byte = r.offset; byte < r.end(); ++byte) {
        const BufferInterval probe{r.buffer, byte, 1, r.space};
        for (std::size_t i = j; i-- > 0;) {
          const auto& ws = t.ops[i].writes;
          if (std::any_of(ws.begin(), ws.end(), [&](const auto& w) { return w.overlaps(probe); })) {
            out.emplace(static_cast<OpId>(i), static_cast<OpId>(j));
            break;
          }
        }
      }
  return out;
}

inline std::set<std::pair<OpId, OpId>> raw_set(const DepGraph& g) {
  std::set<std::pair<OpId, OpId>> out;
  for (const auto& e : g.raw_edges()) out.emplace(e.producer, e.consumer);
  return out;
}

}  // namespace mkplan::testing
