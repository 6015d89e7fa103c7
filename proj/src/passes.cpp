#include "mkplan/passes.hpp"

#include <algorithm>

#include "mkplan/error.hpp"

namespace mkplan {

PlanCandidate gap_fill_reorder(const PlanCandidate& c, const SimReport& r, const HardwareSpec& spec,
                               std::size_t* moved) {
  const auto& trace = c.trace();
  const auto& graph = c.graph();
  const std::size_t n = trace.ops.size();

  std::vector<std::uint64_t> cost(n);
  for (std::size_t v = 0; v < n; ++v) cost[v] = micro_op_cost(trace.ops[v], spec, r.conflict[v]);
  const auto slack = node_slack(graph, cost);
  const auto waits = c.op_waits();

  // ready[v]: when everything v depends on had completed in the given schedule.
  std::vector<std::uint64_t> ready(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    for (OpId p : graph.preds(static_cast<OpId>(v))) ready[v] = std::max(ready[v], r.timing[p].complete);
    for (OpId w : waits[v])
      if (w != v) ready[v] = std::max(ready[v], r.timing[w].complete);
  }

  PlanCandidate out = c;
  out.knobs.flags.gap_fill = true;
  std::size_t count = 0;
  for (auto& order : out.role_orders) {
    const std::size_t len = order.size();
    // gap[q]: every lane idle right before order[q] issued.
    std::vector<bool> gap(len, false);
    std::uint64_t busy_until = 0;
    for (std::size_t q = 0; q < len; ++q) {
      gap[q] = r.timing[order[q]].start > busy_until;
      busy_until = std::max(busy_until, r.timing[order[q]].release);
    }
    std::vector<bool> is_moved(len, false);
    std::vector<std::vector<OpId>> before(len);
    for (std::size_t i = 1; i < len; ++i) {
      const OpId x = order[i];
      if (slack[x] == 0) continue;
      for (std::size_t q = 0; q < i; ++q) {
        if (is_moved[q] || !gap[q]) continue;
        if (r.timing[order[q]].start <= ready[x]) continue;
        before[q].push_back(x);
        is_moved[i] = true;
        ++count;
        break;
      }
    }
    std::vector<OpId> next;
    next.reserve(len);
    for (std::size_t q = 0; q < len; ++q) {
      next.insert(next.end(), before[q].begin(), before[q].end());
      if (!is_moved[q]) next.push_back(order[q]);
    }
    order = std::move(next);
  }
  if (moved) *moved = count;
  return out;
}

PlanCandidate role_rebalance_rewrite(const PlanCandidate& c, const HardwareSpec& spec,
                                     std::size_t* moved) {
  const auto& trace = c.trace();
  const auto& graph = c.graph();
  const std::size_t n = trace.ops.size();

  // For each Dequant: the staged weight intervals its register tile came from.
  std::vector<std::vector<BufferInterval>> staged(n);
  std::vector<OpId> after(n, kNoOp);
  std::vector<bool> relocated(n, false);
  std::size_t count = 0;
  for (const auto& op : trace.ops) {
    if (op.kind != MicroOpKind::Dequant) continue;
    OpId load = kNoOp;
    for (OpId p : graph.preds(op.id))
      if (trace.ops[p].kind == MicroOpKind::LoadSharedToReg) load = p;
    if (load == kNoOp) continue;
    for (const auto& e : graph.raw_edges()) {
      if (e.consumer != load || trace.ops[e.producer].kind != MicroOpKind::GlobalToShared) continue;
      staged[op.id].push_back(e.witness);
      after[op.id] = after[op.id] == kNoOp ? e.producer : std::max(after[op.id], e.producer);
    }
    if (after[op.id] == kNoOp) continue;
    relocated[op.id] = true;
    ++count;
  }

  auto lowered = std::make_shared<Lowered>();
  auto& t = lowered->trace;
  t.buffers = trace.buffers;
  t.padding = trace.padding;
  std::vector<std::vector<OpId>> insert_after(n);
  for (std::size_t v = 0; v < n; ++v)
    if (relocated[v]) insert_after[after[v]].push_back(static_cast<OpId>(v));
  std::vector<OpId> old_of;  // new position -> original op
  for (std::size_t v = 0; v < n; ++v) {
    if (!relocated[v]) {
      t.ops.push_back(trace.ops[v]);
      old_of.push_back(static_cast<OpId>(v));
    }
    for (OpId d : insert_after[v]) {
      MicroOp op = trace.ops[d];
      op.reads = staged[d];
      op.writes = staged[d];
      t.ops.push_back(std::move(op));
      old_of.push_back(d);
    }
  }
  t.renumber();
  lowered->graph = build_dep_graph(t);

  PlanCandidate out;
  out.knobs = c.knobs;
  out.knobs.flags.role_rebalance = true;
  out.lowered = lowered;
  const std::size_t m = t.ops.size();
  out.role_of.resize(m);
  for (std::size_t v = 0; v < m; ++v) {
    const auto& op = t.ops[v];
    out.role_of[v] = op.kind == MicroOpKind::Dequant && relocated[old_of[v]] ? Role::Loader
                                                                              : c.role_of[old_of[v]];
  }

  // Loader order: prefetches as before, each relocated Dequant queued
  // behind the prefetch `stride` fills after its own.
  const auto fills = fill_index(t);
  std::int64_t n_fills = 0;
  for (auto f : fills) n_fills = std::max(n_fills, f + 1);
  std::vector<OpId> last_of_fill(static_cast<std::size_t>(n_fills), kNoOp);
  for (std::size_t v = 0; v < m; ++v)
    if (fills[v] >= 0) last_of_fill[static_cast<std::size_t>(fills[v])] = static_cast<OpId>(v);
  std::vector<std::vector<OpId>> queued(m);
  std::vector<OpId> tail;
  std::int64_t current_fill = -1;
  for (std::size_t v = 0; v < m; ++v) {
    if (fills[v] >= 0) current_fill = fills[v];
    const Role role = out.role_of[v];
    if (role == Role::Loader && t.ops[v].kind == MicroOpKind::Dequant) {
      const std::int64_t target = current_fill + static_cast<std::int64_t>(c.knobs.prefetch_stride);
      if (current_fill >= 0 && target < n_fills)
        queued[last_of_fill[static_cast<std::size_t>(target)]].push_back(static_cast<OpId>(v));
      else
        tail.push_back(static_cast<OpId>(v));
      continue;
    }
    auto& order = out.role_orders[static_cast<std::size_t>(role)];
    order.push_back(static_cast<OpId>(v));
    if (role == Role::Loader) order.insert(order.end(), queued[v].begin(), queued[v].end());
  }
  auto& loader = out.role_orders[static_cast<std::size_t>(Role::Loader)];
  loader.insert(loader.end(), tail.begin(), tail.end());

  out.pages = plan_pages(t, PagePlanOptions{c.knobs.n_stage, c.knobs.prefetch_stride, spec.page_size,
                                            c.knobs.flags.reuse_act_weight,
                                            c.knobs.flags.reuse_act_output});
  if (moved) *moved = count;
  return out;
}

namespace {

PassResult identity(const PlanCandidate& c, const SimReport& r, bool simulated) {
  return PassResult{c, r, false, simulated, 0};
}

PassResult accept_if_no_worse(const PlanCandidate& base, const SimReport& base_report,
                              PlanCandidate variant, const HardwareSpec& spec, std::size_t changed) {
  if (changed == 0 || !validate_plan(variant).empty()) return identity(base, base_report, false);
  SimReport rep = simulate(variant, spec);
  if (rep.makespan > base_report.makespan) return identity(base, base_report, true);
  return PassResult{std::move(variant), std::move(rep), true, true, changed};
}

}  // namespace

PassResult apply_gap_fill(const PlanCandidate& c, const SimReport& r, const HardwareSpec& spec) {
  std::size_t moved = 0;
  PlanCandidate v = gap_fill_reorder(c, r, spec, &moved);
  return accept_if_no_worse(c, r, std::move(v), spec, moved);
}

PassResult apply_role_rebalance(const PlanCandidate& c, const SimReport& r, const HardwareSpec& spec,
                                double threshold) {
  const auto counts = c.trace().count_by_kind();
  if (counts[static_cast<std::size_t>(MicroOpKind::Dequant)] == 0) return identity(c, r, false);
  if (r.idle_fraction(Role::Loader) <= threshold) return identity(c, r, false);
  const auto consumer = r.busy[static_cast<std::size_t>(Role::Consumer)];
  for (Role role : kAllRoles)
    if (r.busy[static_cast<std::size_t>(role)] > consumer) return identity(c, r, false);
  std::size_t moved = 0;
  PlanCandidate v = role_rebalance_rewrite(c, spec, &moved);
  return accept_if_no_worse(c, r, std::move(v), spec, moved);
}

PlanCandidate rebuild_candidate(const OperatorGraph& graph, const HardwareSpec& spec,
                                const PlanKnobs& knobs) {
  knobs.tile.validate();
  PlanKnobs base = knobs;
  base.flags.gap_fill = false;
  base.flags.role_rebalance = false;
  PlanCandidate c =
      materialize(base, lower_for(graph, knobs.tile, knobs.flags.split_reduction, spec.page_size), spec);
  if (knobs.flags.role_rebalance) c = role_rebalance_rewrite(c, spec);
  if (knobs.flags.gap_fill) c = gap_fill_reorder(c, simulate(c, spec), spec);
  return c;
}

}  // namespace mkplan
