#include "mkplan/plan.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include "mkplan/error.hpp"

namespace mkplan {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Launcher: return "Launcher";
    case Role::Loader: return "Loader";
    case Role::Consumer: return "Consumer";
    case Role::Storer: return "Storer";
  }
  return "?";
}

std::optional<Role> parse_role(std::string_view name) {
  for (Role r : kAllRoles)
    if (to_string(r) == name) return r;
  return std::nullopt;
}

std::uint32_t WarpAllocation::of(Role role) const {
  switch (role) {
    case Role::Launcher: return launcher;
    case Role::Loader: return loader;
    case Role::Consumer: return consumer;
    case Role::Storer: return storer;
  }
  return 0;
}

std::string PlanKnobs::encoding() const {
  // Fixed-width fields keep the text order identical to the numeric order.
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "bm%04u-bn%04u-bk%04u-ks%02u-cw%02u-lw%02u-sw%02u-ns%02u-ps%02u-sz%03u-f%d%d%d%d%d",
                tile.block_m, tile.block_n, tile.block_k, tile.k_split, warps.consumer,
                warps.loader, warps.storer, n_stage, prefetch_stride, swizzle,
                flags.reuse_act_weight, flags.reuse_act_output, flags.split_reduction,
                flags.gap_fill, flags.role_rebalance);
  return buf;
}

std::string_view to_string(PagePool pool) {
  switch (pool) {
    case PagePool::Stream: return "stream";
    case PagePool::Resident: return "resident";
    case PagePool::Activation: return "activation";
  }
  return "?";
}

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void push_unique(std::vector<OpId>& v, OpId op) {
  if (v.empty() || v.back() != op) v.push_back(op);
}

void sort_unique(std::vector<OpId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Everything that has to finish before an occupant's pages may be refilled.
void append_release_set(const PageAssignment& a, std::vector<OpId>& out) {
  out.insert(out.end(), a.users.begin(), a.users.end());
  if (a.release != kNoOp) out.push_back(a.release);
}

struct Fill {
  std::vector<OpId> ops;
  std::vector<BufferInterval> intervals;
  std::uint64_t bytes = 0;
};

}  // namespace

std::vector<std::int64_t> fill_index(const MicroOpTrace& trace) {
  std::vector<std::int64_t> out(trace.ops.size(), -1);
  std::int64_t count = 0;
  std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t> last{};
  for (const auto& op : trace.ops) {
    if (op.kind != MicroOpKind::GlobalToShared) continue;
    const auto key = std::make_tuple(op.source_operator, op.tile.m, op.tile.n, op.tile.k);
    if (count == 0 || key != last) ++count;
    last = key;
    out[op.id] = count - 1;
  }
  return out;
}

PagePlan plan_pages(const MicroOpTrace& trace, const PagePlanOptions& o) {
  if (o.n_stage == 0) fail(ErrorKind::ConfigError, "n_stage must be >= 1");
  if (o.page_size == 0) fail(ErrorKind::ConfigError, "page_size must be >= 1");
  const std::size_t nb = trace.buffers.size();

  std::vector<bool> streamed(nb, false), written(nb, false);
  for (const auto& op : trace.ops) {
    for (const auto& w : op.writes) {
      if (w.space != Space::SharedPage) continue;
      written[w.buffer] = true;
      if (op.kind == MicroOpKind::GlobalToShared) streamed[w.buffer] = true;
    }
  }

  const std::vector<std::int64_t> fill_of = fill_index(trace);
  std::vector<Fill> fills;
  for (const auto& op : trace.ops) {
    if (fill_of[op.id] < 0) continue;
    if (static_cast<std::size_t>(fill_of[op.id]) == fills.size()) fills.emplace_back();
    auto& f = fills.back();
    f.ops.push_back(op.id);
    for (const auto& w : op.writes) {
      if (w.space != Space::SharedPage) continue;
      f.intervals.push_back(w);
      f.bytes += w.length;
    }
  }

  PagePlan plan;
  plan.n_stage = o.n_stage;
  plan.prefetch_stride = o.prefetch_stride;
  for (const auto& f : fills)
    plan.pages_per_stage = std::max<std::uint32_t>(
        plan.pages_per_stage, static_cast<std::uint32_t>(std::max<std::uint64_t>(1, ceil_div(f.bytes, o.page_size))));

  // Resident region: shared buffers nobody writes (e.g. INT4 group scales).
  std::uint64_t resident_bytes = 0;
  std::vector<BufferId> resident;
  for (BufferId b = 0; b < nb; ++b) {
    if (trace.buffers[b].space == Space::SharedPage && !written[b]) {
      resident.push_back(b);
      resident_bytes += trace.buffers[b].bytes;
    }
  }
  plan.resident_pages = static_cast<std::uint32_t>(ceil_div(resident_bytes, o.page_size));

  auto& as = plan.assignments;
  std::vector<std::int64_t> owner_of_buffer(nb, -1);  // resident and activation pools
  if (!resident.empty() && plan.resident_pages > 0) {
    PageAssignment a;
    a.pool = PagePool::Resident;
    for (BufferId b : resident) {
      a.intervals.push_back({b, 0, trace.buffers[b].bytes, Space::SharedPage});
      owner_of_buffer[b] = 0;
    }
    const std::uint32_t base = o.n_stage * plan.pages_per_stage;
    for (std::uint32_t p = 0; p < plan.resident_pages; ++p) a.pages.push_back(base + p);
    as.push_back(std::move(a));
  }
  const std::size_t first_fill = as.size();
  for (const auto& f : fills) {
    PageAssignment a;
    a.pool = PagePool::Stream;
    a.intervals = f.intervals;
    a.fillers = f.ops;
    as.push_back(std::move(a));
  }
  const std::size_t first_act = as.size();
  for (const auto& op : trace.ops) {
    for (const auto& w : op.writes) {
      if (w.space != Space::SharedPage || streamed[w.buffer] || owner_of_buffer[w.buffer] >= 0)
        continue;
      PageAssignment a;
      a.pool = PagePool::Activation;
      a.intervals.push_back({w.buffer, 0, trace.buffers[w.buffer].bytes, Space::SharedPage});
      a.fillers.push_back(op.id);
      owner_of_buffer[w.buffer] = static_cast<std::int64_t>(as.size());
      as.push_back(std::move(a));
    }
  }

  // Users: every op touching an occupant's bytes after it was filled.
  struct Live {
    std::uint64_t end;
    std::size_t owner;
  };
  std::vector<std::map<std::uint64_t, Live>> live(nb);
  auto touch = [&](const MicroOp& op, const BufferInterval& iv) {
    if (iv.space != Space::SharedPage) return;
    if (!streamed[iv.buffer]) {
      const auto idx = owner_of_buffer[iv.buffer];
      if (idx < 0) return;
      auto& a = as[static_cast<std::size_t>(idx)];
      if (a.acquire() != op.id) push_unique(a.users, op.id);
      return;
    }
    auto& m = live[iv.buffer];
    auto it = m.upper_bound(iv.offset);
    if (it != m.begin()) --it;
    for (; it != m.end() && it->first < iv.end(); ++it)
      if (it->second.end > iv.offset) push_unique(as[it->second.owner].users, op.id);
  };
  for (const auto& op : trace.ops) {
    for (const auto& r : op.reads) touch(op, r);
    if (op.kind == MicroOpKind::GlobalToShared) {
      const std::size_t owner = first_fill + static_cast<std::size_t>(fill_of[op.id]);
      for (const auto& w : op.writes) {
        if (w.space != Space::SharedPage) continue;
        auto& m = live[w.buffer];
        auto it = m.upper_bound(w.offset);
        if (it != m.begin()) --it;
        while (it != m.end() && it->first < w.end()) {
          if (it->second.end <= w.offset) {
            ++it;
            continue;
          }
          const auto s = it->first;
          const Live seg = it->second;
          it = m.erase(it);
          if (s < w.offset) m.emplace(s, Live{w.offset, seg.owner});
          if (seg.end > w.end()) it = m.emplace(w.end(), Live{seg.end, seg.owner}).first;
        }
        m.emplace(w.offset, Live{w.end(), owner});
      }
    } else {
      for (const auto& w : op.writes) touch(op, w);
    }
  }
  for (auto& a : as) sort_unique(a.users);

  // Release points.
  std::map<std::uint32_t, OpId> operator_end;
  std::map<std::uint32_t, OpId> operator_start;
  for (const auto& op : trace.ops) {
    operator_end[op.source_operator] = op.id;
    operator_start.try_emplace(op.source_operator, op.id);
  }
  for (std::size_t i = first_fill; i < as.size(); ++i) {
    auto& a = as[i];
    const OpId last = a.users.empty() ? a.fillers.back() : std::max(a.users.back(), a.fillers.back());
    if (a.pool == PagePool::Activation && !o.reuse_act_weight)
      a.release = operator_end.at(trace.ops[last].source_operator);
    else
      a.release = last;
  }

  // Stream ring: fill f takes slot f mod n_stage and is gated on the
  // release of fill f - (stride + 1).
  const std::uint32_t w = plan.pages_per_stage;
  const std::uint32_t total_stream = o.n_stage * w;
  std::vector<std::int64_t> page_owner(total_stream + plan.resident_pages, -1);
  for (std::size_t f = 0; f < fills.size(); ++f) {
    auto& a = as[first_fill + f];
    const std::uint32_t slot = static_cast<std::uint32_t>(f % o.n_stage);
    const auto used = static_cast<std::uint32_t>(std::max<std::uint64_t>(1, ceil_div(fills[f].bytes, o.page_size)));
    for (std::uint32_t p = 0; p < used; ++p) {
      const std::uint32_t page = slot * w + p;
      a.pages.push_back(page);
      if (page_owner[page] >= 0) append_release_set(as[static_cast<std::size_t>(page_owner[page])], a.wait);
      page_owner[page] = static_cast<std::int64_t>(first_fill + f);
    }
    const std::size_t gate = static_cast<std::size_t>(o.prefetch_stride) + 1;
    if (f >= gate) append_release_set(as[first_fill + f - gate], a.wait);
    sort_unique(a.wait);
  }

  // Activation linear scan in program order of first write.
  std::vector<std::size_t> act_order;
  for (std::size_t i = first_act; i < as.size(); ++i) act_order.push_back(i);
  std::vector<std::size_t> holding;       // assignments still owning pages
  std::set<std::uint32_t> free_pages;
  std::vector<std::int64_t> act_owner;    // local page -> last assignment
  for (std::size_t idx : act_order) {
    auto& a = as[idx];
    const OpId acq = a.acquire();
    const OpId op_start = operator_start.at(trace.ops[acq].source_operator);
    std::vector<std::size_t> still;
    for (std::size_t h : holding) {
      const OpId rel = as[h].release;
      const bool freed = o.reuse_act_output ? rel < acq : rel < op_start;
      if (!freed) {
        still.push_back(h);
        continue;
      }
      for (std::uint32_t p : as[h].pages) free_pages.insert(p);
    }
    holding = std::move(still);
    const std::uint64_t need = std::max<std::uint64_t>(1, ceil_div(a.intervals.front().length, o.page_size));
    for (std::uint64_t k = 0; k < need; ++k) {
      std::uint32_t p;
      if (!free_pages.empty()) {
        p = *free_pages.begin();
        free_pages.erase(free_pages.begin());
      } else {
        p = static_cast<std::uint32_t>(act_owner.size());
        act_owner.push_back(-1);
      }
      if (act_owner[p] >= 0) append_release_set(as[static_cast<std::size_t>(act_owner[p])], a.wait);
      act_owner[p] = static_cast<std::int64_t>(idx);
      a.pages.push_back(p);
    }
    sort_unique(a.wait);
    holding.push_back(idx);
  }
  plan.act_pages = static_cast<std::uint32_t>(act_owner.size());
  const std::uint32_t act_base = total_stream + plan.resident_pages;
  for (std::size_t idx : act_order)
    for (auto& p : as[idx].pages) p += act_base;
  return plan;
}

std::vector<std::vector<OpId>> PlanCandidate::op_waits() const {
  std::vector<std::vector<OpId>> out(trace().ops.size());
  for (const auto& a : pages.assignments)
    for (OpId f : a.fillers) out[f].insert(out[f].end(), a.wait.begin(), a.wait.end());
  for (auto& w : out) sort_unique(w);
  return out;
}

Role default_role(MicroOpKind kind) {
  switch (kind) {
    case MicroOpKind::GlobalToShared: return Role::Loader;
    case MicroOpKind::Reduce:
    case MicroOpKind::RegToGlobal: return Role::Storer;
    default: return Role::Consumer;
  }
}

std::vector<Role> default_role_map(const MicroOpTrace& trace) {
  std::vector<Role> out;
  out.reserve(trace.ops.size());
  for (const auto& op : trace.ops) out.push_back(default_role(op.kind));
  return out;
}

std::shared_ptr<const Lowered> lower_for(const OperatorGraph& graph, const TileConfig& tile,
                                         bool split, std::uint64_t page_size) {
  auto out = std::make_shared<Lowered>();
  out->trace = lower_graph(graph, tile, page_size);
  out->graph = build_dep_graph(out->trace);
  if (split) {
    auto s = split_reduction(out->graph, out->trace);
    out->trace = std::move(s.trace);
    out->graph = std::move(s.graph);
  }
  return out;
}

PlanCandidate materialize(const PlanKnobs& knobs, std::shared_ptr<const Lowered> lowered,
                          const HardwareSpec& spec) {
  PlanCandidate c;
  c.knobs = knobs;
  c.lowered = std::move(lowered);
  c.role_of = default_role_map(c.trace());
  for (std::size_t v = 0; v < c.role_of.size(); ++v)
    c.role_orders[static_cast<std::size_t>(c.role_of[v])].push_back(static_cast<OpId>(v));
  c.pages = plan_pages(c.trace(), PagePlanOptions{knobs.n_stage, knobs.prefetch_stride,
                                                  spec.page_size, knobs.flags.reuse_act_weight,
                                                  knobs.flags.reuse_act_output});
  return c;
}

namespace {

template <typename T>
std::size_t radix(const std::vector<T>& v) { return v.size(); }

}  // namespace

std::size_t SearchSpace::size() const {
  return radix(block_m) * radix(block_n) * radix(block_k) * radix(k_split) *
         radix(consumer_warps) * radix(loader_warps) * radix(storer_warps) * radix(n_stage) *
         radix(prefetch_stride) * radix(swizzle) * radix(reuse_act_weight) *
         radix(reuse_act_output) * radix(split_reduction);
}

PlanKnobs SearchSpace::at(std::size_t index) const {
  PlanKnobs k;
  auto take = [&index](const auto& v) {
    const auto& x = v[index % v.size()];
    index /= v.size();
    return x;
  };
  // Decode from the fastest-varying field backwards.
  k.flags.split_reduction = take(split_reduction);
  k.flags.reuse_act_output = take(reuse_act_output);
  k.flags.reuse_act_weight = take(reuse_act_weight);
  k.swizzle = take(swizzle);
  k.prefetch_stride = take(prefetch_stride);
  k.n_stage = take(n_stage);
  k.warps.storer = take(storer_warps);
  k.warps.loader = take(loader_warps);
  k.warps.consumer = take(consumer_warps);
  k.tile.k_split = take(k_split);
  k.tile.block_k = take(block_k);
  k.tile.block_n = take(block_n);
  k.tile.block_m = take(block_m);
  return k;
}

void SearchSpace::validate() const {
  auto nonempty = [](std::size_t sz, const char* name) {
    if (sz == 0) fail(ErrorKind::ConfigError, std::string("search space field '") + name + "' is empty");
  };
  nonempty(block_m.size(), "block_m");
  nonempty(block_n.size(), "block_n");
  nonempty(block_k.size(), "block_k");
  nonempty(k_split.size(), "k_split");
  nonempty(consumer_warps.size(), "consumer_warps");
  nonempty(loader_warps.size(), "loader_warps");
  nonempty(storer_warps.size(), "storer_warps");
  nonempty(n_stage.size(), "n_stage");
  nonempty(prefetch_stride.size(), "prefetch_stride");
  nonempty(swizzle.size(), "swizzles");
  nonempty(reuse_act_weight.size(), "reuse_act_weight");
  nonempty(reuse_act_output.size(), "reuse_act_output");
  nonempty(split_reduction.size(), "split_reduction");
  for (auto s : n_stage)
    if (s == 0) fail(ErrorKind::ConfigError, "n_stage values must be >= 1");
  for (const auto* v : {&consumer_warps, &loader_warps, &storer_warps})
    for (auto w : *v)
      if (w == 0) fail(ErrorKind::ConfigError, "warp counts must be >= 1");
}

std::string_view to_string(PruneReason reason) {
  switch (reason) {
    case PruneReason::SmemExceeded: return "SmemExceeded";
    case PruneReason::StageInfeasible: return "StageInfeasible";
    case PruneReason::WarpExceeded: return "WarpExceeded";
    case PruneReason::TileInvalid: return "TileInvalid";
  }
  return "?";
}

std::optional<PruneReason> resource_filter(const PlanCandidate& c, const HardwareSpec& spec) {
  const auto& k = c.knobs;
  const auto& p = c.pages;
  const std::uint64_t budget = compute_page_budget(spec, k.n_stage);
  if (p.peak_pages() > budget) return PruneReason::SmemExceeded;
  const std::uint64_t stages = compute_stage_count(budget, 0, p.resident_pages, p.act_pages,
                                                   std::max<std::uint32_t>(1, p.pages_per_stage));
  if (stages < k.n_stage || k.prefetch_stride + 1 > k.n_stage) return PruneReason::StageInfeasible;
  if (k.warps.total() > spec.warps_per_sm) return PruneReason::WarpExceeded;
  return std::nullopt;
}

Enumerated enumerate_candidates(const OperatorGraph& graph, const HardwareSpec& spec,
                                const SearchSpace& space) {
  space.validate();
  Enumerated out;
  std::map<std::pair<TileConfig, bool>, std::shared_ptr<const Lowered>> cache;
  std::set<std::pair<TileConfig, bool>> invalid;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const PlanKnobs k = space.at(i);
    const auto key = std::make_pair(k.tile, k.flags.split_reduction);
    if (invalid.contains(key)) {
      out.pruned.emplace_back(k, PruneReason::TileInvalid);
      continue;
    }
    auto it = cache.find(key);
    if (it == cache.end()) {
      try {
        k.tile.validate();
        it = cache.emplace(key, lower_for(graph, k.tile, k.flags.split_reduction, spec.page_size)).first;
      } catch (const Error&) {
        invalid.insert(key);
        out.pruned.emplace_back(k, PruneReason::TileInvalid);
        continue;
      }
    }
    PlanCandidate c = materialize(k, it->second, spec);
    if (auto why = resource_filter(c, spec))
      out.pruned.emplace_back(k, *why);
    else
      out.kept.push_back(std::move(c));
  }
  return out;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::IllegalTransition: return "IllegalTransition";
    case ViolationKind::WarViolation: return "WarViolation";
    case ViolationKind::RoleOrderViolation: return "RoleOrderViolation";
    case ViolationKind::RoleCoverage: return "RoleCoverage";
    case ViolationKind::StrideExceeded: return "StrideExceeded";
    case ViolationKind::PotentialDeadlock: return "PotentialDeadlock";
  }
  return "?";
}

std::vector<PlanViolation> validate_plan(const PlanCandidate& c) {
  std::vector<PlanViolation> out;
  const auto& trace = c.trace();
  const auto& graph = c.graph();
  const std::size_t n = trace.ops.size();

  // Every op issued exactly once, by the role it is mapped to.
  std::vector<std::int64_t> pos(n, -1);
  bool coverage_ok = c.role_of.size() == n;
  if (!coverage_ok)
    out.push_back({ViolationKind::RoleCoverage, kNoOp, -1, "role map does not cover the trace"});
  for (Role r : kAllRoles) {
    const auto& order = c.role_orders[static_cast<std::size_t>(r)];
    for (std::size_t i = 0; i < order.size(); ++i) {
      const OpId op = order[i];
      if (op >= n || pos[op] >= 0 || (coverage_ok && c.role_of[op] != r)) {
        out.push_back({ViolationKind::RoleCoverage, op, -1,
                       "op issued twice, unknown or by the wrong role"});
        coverage_ok = false;
        continue;
      }
      pos[op] = static_cast<std::int64_t>(i);
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (pos[v] < 0) {
      out.push_back({ViolationKind::RoleCoverage, static_cast<OpId>(v), -1, "op never issued"});
      coverage_ok = false;
    }
  }
  if (coverage_ok) {
    for (const auto& e : graph.raw_edges()) {
      if (c.role_of[e.producer] == c.role_of[e.consumer] && pos[e.producer] > pos[e.consumer])
        out.push_back({ViolationKind::RoleOrderViolation, e.consumer, -1,
                       "issued before its producer " + std::to_string(e.producer)});
    }
  }

  if (c.knobs.prefetch_stride + 1 > c.pages.n_stage)
    out.push_back({ViolationKind::StrideExceeded, kNoOp, -1,
                   "prefetch stride needs more stages than the ring holds"});

  // Page lifecycles: Empty -> Locked -> Ready -> Empty, resident pages start Ready.
  enum class State { Empty, Locked, Ready };
  std::map<std::uint32_t, State> state;
  std::map<std::uint32_t, std::size_t> prev;
  for (std::size_t i = 0; i < c.pages.assignments.size(); ++i) {
    const auto& a = c.pages.assignments[i];
    for (std::uint32_t page : a.pages) {
      auto st = state.try_emplace(page, State::Empty).first;
      if (st->second != State::Empty) {
        out.push_back({ViolationKind::IllegalTransition, a.acquire(), page,
                       st->second == State::Ready ? "Ready -> Locked" : "Locked -> Locked"});
      } else if (a.fillers.empty() && prev.contains(page)) {
        out.push_back({ViolationKind::IllegalTransition, kNoOp, page, "Empty -> Ready without fill"});
      }
      if (auto pv = prev.find(page); pv != prev.end() && !a.fillers.empty()) {
        std::vector<OpId> need;
        append_release_set(c.pages.assignments[pv->second], need);
        for (OpId r : need) {
          if (!std::binary_search(a.wait.begin(), a.wait.end(), r))
            out.push_back({ViolationKind::WarViolation, r, page,
                           "page refilled before reader " + std::to_string(r) + " finished"});
        }
      }
      st->second = a.release == kNoOp ? State::Ready : State::Empty;
      prev[page] = i;
    }
  }

  // Combined precedence: RAW edges, per-role issue order and page waits.
  if (coverage_ok) {
    std::vector<std::vector<OpId>> succ(n);
    std::vector<std::size_t> indeg(n, 0);
    auto edge = [&](OpId a, OpId b) {
      succ[a].push_back(b);
      ++indeg[b];
    };
    for (const auto& e : graph.raw_edges()) edge(e.producer, e.consumer);
    for (const auto& order : c.role_orders)
      for (std::size_t i = 1; i < order.size(); ++i) edge(order[i - 1], order[i]);
    const auto waits = c.op_waits();
    for (std::size_t v = 0; v < n; ++v)
      for (OpId w : waits[v])
        if (w != v) edge(w, static_cast<OpId>(v));
    std::queue<OpId> ready;
    for (std::size_t v = 0; v < n; ++v)
      if (indeg[v] == 0) ready.push(static_cast<OpId>(v));
    std::size_t seen = 0;
    while (!ready.empty()) {
      const OpId v = ready.front();
      ready.pop();
      ++seen;
      for (OpId s : succ[v])
        if (--indeg[s] == 0) ready.push(s);
    }
    if (seen != n) {
      OpId stuck = kNoOp;
      for (std::size_t v = 0; v < n && stuck == kNoOp; ++v)
        if (indeg[v] > 0) stuck = static_cast<OpId>(v);
      out.push_back({ViolationKind::PotentialDeadlock, stuck, -1,
                     "issue orders and page waits form a cycle"});
    }
  }
  return out;
}

}  // namespace mkplan
