#include <doctest.h>

#include "mkplan/error.hpp"
#include "mkplan/passes.hpp"
#include "mkplan/simulator.hpp"
#include "support.hpp"

using namespace mkplan;
using namespace mkplan::testing;

namespace {

PlanCandidate candidate(const std::string& g, const HardwareSpec& spec, PlanKnobs k = {}) {
  return rebuild_candidate(graph(g), spec, k);
}

bool has(const std::vector<PlanViolation>& vs, ViolationKind kind) {
  for (const auto& v : vs)
    if (v.kind == kind) return true;
  return false;
}

// First stream page that is reused by a later fill.
std::pair<std::size_t, std::size_t> reused_stream_page(const PagePlan& p) {
  for (std::size_t a = 0; a < p.assignments.size(); ++a) {
    if (p.assignments[a].pool != PagePool::Stream) continue;
    for (std::size_t b = a + 1; b < p.assignments.size(); ++b)
      if (p.assignments[b].pool == PagePool::Stream && p.assignments[b].pages == p.assignments[a].pages)
        return {a, b};
  }
  return {0, 0};
}

}  // namespace

TEST_CASE("four weight tiles on two pages alternate") {
  // one page per tile, two stages: fills go to pages 0, 1, 0, 1
  const auto t = lower_graph(graph("decode-gemm"), TileConfig{16, 64, 64, 1}, 16384);
  const auto p = plan_pages(t, PagePlanOptions{2, 1, 16384, false, false});
  CHECK(p.pages_per_stage == 1);
  std::vector<std::uint32_t> seq;
  for (const auto& a : p.assignments)
    if (a.pool == PagePool::Stream && seq.size() < 4) seq.push_back(a.pages.at(0));
  CHECK(seq == std::vector<std::uint32_t>{0, 1, 0, 1});
}

TEST_CASE("fill indices are contiguous per operator tile") {
  const auto t = lower_graph(graph("decode-gemm"), TileConfig{}, 16384);
  const auto f = fill_index(t);
  std::int64_t last = -1;
  for (std::size_t v = 0; v < t.size(); ++v) {
    if (t.ops[v].kind != MicroOpKind::GlobalToShared) {
      CHECK(f[v] == -1);
      continue;
    }
    CHECK((f[v] == last || f[v] == last + 1));
    last = f[v];
  }
  CHECK(last > 2);
}

TEST_CASE("reuse_act_weight releases activation pages no later") {
  const auto t = lower_graph(graph("qwen-decoder-layer"), TileConfig{}, 16384);
  const auto off = plan_pages(t, PagePlanOptions{2, 1, 16384, false, false});
  const auto on = plan_pages(t, PagePlanOptions{2, 1, 16384, true, false});
  CHECK(on.act_pages <= off.act_pages);
  std::size_t earlier = 0;
  for (std::size_t a = 0; a < std::min(on.assignments.size(), off.assignments.size()); ++a) {
    const auto& x = on.assignments[a];
    const auto& y = off.assignments[a];
    if (x.pool != PagePool::Activation || y.pool != PagePool::Activation || x.intervals != y.intervals) continue;
    CHECK(x.release <= y.release);
    earlier += x.release < y.release;
  }
  CHECK(earlier > 0);
}

TEST_CASE("shipped candidates validate") {
  const auto l20 = hw("l20");
  for (auto g : {"tiny-gemm", "tiny-gemm-int4", "decode-gemm", "qwen-decoder-layer"}) {
    const auto c = candidate(g, l20);
    CHECK(validate_plan(c).empty());
  }
}

TEST_CASE("a page locked again before release is illegal") {
  auto c = candidate("decode-gemm", hw("l20"));
  const auto [a, b] = reused_stream_page(c.pages);
  REQUIRE(b > a);
  c.pages.assignments[a].release = kNoOp;
  CHECK(has(validate_plan(c), ViolationKind::IllegalTransition));
}

TEST_CASE("a refill that does not wait for the readers is a war violation") {
  auto c = candidate("decode-gemm", hw("l20"));
  const auto [a, b] = reused_stream_page(c.pages);
  REQUIRE(b > a);
  c.pages.assignments[b].wait.clear();
  CHECK(has(validate_plan(c), ViolationKind::WarViolation));
}

TEST_CASE("role order against a dependency is caught") {
  auto c = candidate("tiny-gemm", hw("l20"));
  auto& consumer = c.role_orders[static_cast<std::size_t>(Role::Consumer)];
  REQUIRE(consumer.size() >= 2);
  std::reverse(consumer.begin(), consumer.end());
  const auto vs = validate_plan(c);
  CHECK((has(vs, ViolationKind::RoleOrderViolation) || has(vs, ViolationKind::PotentialDeadlock)));
}

TEST_CASE("an op missing from every role is caught") {
  auto c = candidate("tiny-gemm", hw("l20"));
  c.role_orders[static_cast<std::size_t>(Role::Consumer)].pop_back();
  CHECK(has(validate_plan(c), ViolationKind::RoleCoverage));
}

TEST_CASE("resource filter reasons") {
  const auto l20 = hw("l20");
  PlanKnobs k;
  k.warps.consumer = 64;
  CHECK(resource_filter(candidate("tiny-gemm", l20, k), l20) == PruneReason::WarpExceeded);
  k = {};
  k.n_stage = 2;
  k.prefetch_stride = 2;
  CHECK(resource_filter(candidate("tiny-gemm", l20, k), l20) == PruneReason::StageInfeasible);
  const auto tiny = hw("tiny-smem");
  CHECK(resource_filter(candidate("tiny-gemm", tiny), tiny) == PruneReason::SmemExceeded);
  CHECK(!resource_filter(candidate("tiny-gemm", l20), l20));
}

TEST_CASE("simulation is deterministic and consistent") {
  const auto l20 = hw("l20");
  const auto c = candidate("qwen-decoder-layer", l20);
  const auto a = simulate(c, l20);
  const auto b = simulate(c, l20);
  CHECK(a.makespan == b.makespan);
  CHECK(a.timing == b.timing);
  CHECK(a.events == b.events);
  CHECK(a.duty_cycle() > 0.0);
  CHECK(a.duty_cycle() <= 1.0);
  const auto& deps = c.graph();
  for (const auto& e : deps.raw_edges()) CHECK(a.timing[e.producer].complete <= a.timing[e.consumer].start);
  for (const auto& t : a.timing) CHECK(t.complete <= a.makespan);
}

TEST_CASE("simulating an empty trace is a validation error") {
  PlanCandidate c;
  c.lowered = std::make_shared<Lowered>();
  try {
    simulate(c, hw("l20"));
    FAIL("simulated an empty trace");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ValidationError);
  }
}

TEST_CASE("a circular wait is reported as a deadlock") {
  const auto l20 = hw("l20");
  auto c = candidate("tiny-gemm", l20);
  // make the first G2S wait on the final store
  const auto& ops = c.trace().ops;
  OpId g2s = kNoOp;
  for (const auto& op : ops)
    if (op.kind == MicroOpKind::GlobalToShared && g2s == kNoOp) g2s = op.id;
  for (auto& a : c.pages.assignments)
    if (std::find(a.fillers.begin(), a.fillers.end(), g2s) != a.fillers.end()) a.wait.push_back(ops.back().id);
  CHECK(has(validate_plan(c), ViolationKind::PotentialDeadlock));
  try {
    simulate(c, l20);
    FAIL("simulated a deadlocked plan");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InternalDeadlock);
  }
}

TEST_CASE("more stages cut page waits on a loader-bound gemm") {
  const auto l20 = hw("l20");
  PlanKnobs k;
  k.swizzle = 7;
  k.n_stage = 2;
  k.prefetch_stride = 1;
  const auto two = simulate(candidate("decode-gemm", l20, k), l20);
  k.n_stage = 4;
  k.prefetch_stride = 3;
  const auto four = simulate(candidate("decode-gemm", l20, k), l20);
  CHECK(four.makespan < two.makespan);
  CHECK(four.stalls[static_cast<std::size_t>(StallReason::PageWait)] <
        two.stalls[static_cast<std::size_t>(StallReason::PageWait)]);
}

TEST_CASE("swizzle removes bank conflict stalls") {
  const auto l20 = hw("l20");
  PlanKnobs k;
  const auto plain = simulate(candidate("tiny-gemm", l20, k), l20);
  k.swizzle = 7;
  const auto swz = simulate(candidate("tiny-gemm", l20, k), l20);
  CHECK(swz.stalls[static_cast<std::size_t>(StallReason::BankConflict)] <
        plain.stalls[static_cast<std::size_t>(StallReason::BankConflict)]);
}

TEST_CASE("passes never lengthen the schedule") {
  const auto l20 = hw("l20");
  for (auto g : {"decode-gemm", "qwen-decoder-layer", "tiny-gemm-int4"})
    for (std::uint32_t ns : {2u, 3u})
      for (std::uint32_t cw : {4u, 16u}) {
        PlanKnobs k;
        k.n_stage = ns;
        k.warps.consumer = cw;
        const auto c = candidate(g, l20, k);
        const auto r = simulate(c, l20);
        const auto gf = apply_gap_fill(c, r, l20);
        CHECK(gf.report.makespan <= r.makespan);
        CHECK(validate_plan(gf.candidate).empty());
        const auto rb = apply_role_rebalance(c, r, l20);
        CHECK(rb.report.makespan <= r.makespan);
        CHECK(validate_plan(rb.candidate).empty());
      }
}

TEST_CASE("rebuilding from knobs reproduces an applied pass") {
  const auto l20 = hw("l20");
  const auto g = graph("qwen-decoder-layer");
  PlanKnobs k;
  k.warps.consumer = 4;
  const auto c = rebuild_candidate(g, l20, k);
  const auto r = simulate(c, l20);
  const auto gf = apply_gap_fill(c, r, l20);
  REQUIRE(gf.applied);
  const auto again = rebuild_candidate(g, l20, gf.candidate.knobs);
  CHECK(again.role_orders == gf.candidate.role_orders);
  CHECK(simulate(again, l20).makespan == gf.report.makespan);
}

TEST_CASE("chrome trace names every role") {
  const auto l20 = hw("l20");
  const auto c = candidate("tiny-gemm", l20);
  const auto json = chrome_trace(c, simulate(c, l20));
  for (Role role : kAllRoles) CHECK(json.find(std::string(to_string(role))) != std::string::npos);
}

namespace {

// Loader streams `tiles` weight tiles into shared pages, Consumer runs one
// MmaTile per tile; both cost 10 cycles.
struct Streamed {
  HardwareSpec spec;
  PlanCandidate c;
};

Streamed streamed(std::uint32_t tiles, std::uint32_t n_stage) {
  Streamed s;
  s.spec.page_size = 64;
  s.spec.smem_max = 4096;
  s.spec.overhead = {};
  s.spec.latency[static_cast<std::size_t>(MicroOpKind::GlobalToShared)] = 10;
  s.spec.latency[static_cast<std::size_t>(MicroOpKind::MmaTile)] = 10;
  auto low = std::make_shared<Lowered>();
  auto& t = low->trace;
  const auto w = t.intern("w", Space::Global, 64 * tiles);
  const auto sh = t.intern("w.stage", Space::SharedPage, 64 * tiles);
  const auto y = t.intern("y", Space::Global, 64 * tiles);
  for (std::uint32_t i = 0; i < tiles; ++i) {
    MicroOp g;
    g.kind = MicroOpKind::GlobalToShared;
    g.tile.k = i;
    g.reads = {{w, 64u * i, 64, Space::Global}};
    g.writes = {{sh, 64u * i, 64, Space::SharedPage}};
    t.ops.push_back(g);
    MicroOp m;
    m.kind = MicroOpKind::MmaTile;
    m.tile.k = i;
    m.reads = {{sh, 64u * i, 64, Space::SharedPage}};
    m.writes = {{y, 64u * i, 64, Space::Global}};
    t.ops.push_back(m);
  }
  t.renumber();
  low->graph = build_dep_graph(t);
  PlanKnobs k;
  k.warps.consumer = 4;  // one lane each
  k.n_stage = n_stage;
  k.prefetch_stride = 1;
  s.c = materialize(k, low, s.spec);
  return s;
}

}  // namespace

TEST_CASE("single mma tile runs at full duty") {
  HardwareSpec spec;
  spec.latency[static_cast<std::size_t>(MicroOpKind::MmaTile)] = 16;
  auto low = std::make_shared<Lowered>();
  const auto a = low->trace.intern("a", Space::Global, 16);
  MicroOp m;
  m.kind = MicroOpKind::MmaTile;
  m.reads = {{a, 0, 16, Space::Global}};
  low->trace.ops.push_back(m);
  low->graph = build_dep_graph(low->trace);
  const auto r = simulate(materialize(PlanKnobs{}, low, spec), spec);
  CHECK(r.makespan == 16);
  CHECK(r.duty_cycle() == doctest::Approx(1.0));
  for (const auto& [reason, cycles] : stall_breakdown(r)) CHECK(cycles == 0);
}

TEST_CASE("two pages overlap loads with compute") {
  const auto s = streamed(4, 2);
  CHECK(validate_plan(s.c).empty());
  const auto r = simulate(s.c, s.spec);
  CHECK(r.makespan == 50);
  CHECK(r.duty_cycle() == doctest::Approx(0.8));
}

TEST_CASE("one page serializes loads and compute") {
  const auto s = streamed(4, 1);
  const auto r = simulate(s.c, s.spec);
  CHECK(r.makespan == 80);
  CHECK(r.duty_cycle() == doctest::Approx(0.5));
  CHECK(stall_breakdown(r).at(StallReason::PageWait) == 40);
}

TEST_CASE("stall breakdown partitions consumer idle time") {
  const auto l20 = hw("l20");
  for (auto g : {"tiny-gemm", "decode-gemm", "qwen-decoder-layer"}) {
    const auto r = simulate(candidate(g, l20), l20);
    std::uint64_t sum = 0;
    for (const auto& [reason, cycles] : stall_breakdown(r)) sum += cycles;
    CHECK(sum == r.makespan - r.consumer_productive);
  }
}

TEST_CASE("a cross-role dependency chain stalls on dependencies, not pages") {
  HardwareSpec spec;
  auto low = std::make_shared<Lowered>();
  auto& t = low->trace;
  const auto a = t.intern("a", Space::Global, 16);
  const auto b = t.intern("b", Space::Global, 16);
  const auto c = t.intern("c", Space::Global, 16);
  auto op = [&](MicroOpKind kind, BufferId in, BufferId out) {
    MicroOp m;
    m.kind = kind;
    m.reads = {{in, 0, 16, Space::Global}};
    m.writes = {{out, 0, 16, Space::Global}};
    t.ops.push_back(m);
  };
  op(MicroOpKind::Reduce, a, b);   // Storer
  op(MicroOpKind::MmaTile, b, c);  // Consumer waits on it
  op(MicroOpKind::RegToGlobal, c, a);
  t.renumber();
  low->graph = build_dep_graph(t);
  const auto r = simulate(materialize(PlanKnobs{}, low, spec), spec);
  const auto st = stall_breakdown(r);
  CHECK(st.at(StallReason::PageWait) == 0);
  CHECK(st.at(StallReason::DepWait) > 0);
}

TEST_CASE("duty cycle loss is a relative drop") {
  CHECK(duty_cycle_loss(0.8, 0.5) == doctest::Approx(0.375));
  CHECK(duty_cycle_loss(0.6, 0.6) == 0.0);
  CHECK_THROWS_AS(duty_cycle_loss(0.0, 0.5), Error);
  const auto s = streamed(4, 2);
  const auto r = simulate(s.c, s.spec);
  CHECK(duty_cycle_loss(r, r) == 0.0);
}

TEST_CASE("default role map") {
  const auto t = lower_graph(graph("tiny-gemm"), TileConfig{}, 16384);
  const auto roles = default_role_map(t);
  std::array<std::size_t, kNumRoles> n{};
  for (Role r : roles) ++n[static_cast<std::size_t>(r)];
  CHECK(n[static_cast<std::size_t>(Role::Launcher)] == 0);
  CHECK(n[static_cast<std::size_t>(Role::Loader)] == 1);
  CHECK(n[static_cast<std::size_t>(Role::Consumer)] == 4);
  CHECK(n[static_cast<std::size_t>(Role::Storer)] == 1);
  CHECK(default_role_map(MicroOpTrace{}).empty());
  const auto q = lower_graph(graph("tiny-gemm-int4"), TileConfig{}, 16384);
  const auto qr = default_role_map(q);
  for (const auto& op : q.ops)
    if (op.kind == MicroOpKind::Dequant) CHECK(qr[op.id] == Role::Consumer);
}

TEST_CASE("role rebalance moves dequant to the loader") {
  const auto l20 = hw("l20");
  PlanKnobs k;
  k.flags.role_rebalance = true;
  const auto c = candidate("tiny-gemm-int4", l20, k);
  std::size_t dequant = 0;
  for (const auto& op : c.trace().ops)
    if (op.kind == MicroOpKind::Dequant) {
      ++dequant;
      CHECK(c.role_of[op.id] == Role::Loader);
    }
  CHECK(dequant == 1);
  CHECK(validate_plan(c).empty());
}
