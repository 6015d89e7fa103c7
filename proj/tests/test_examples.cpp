// Small worked examples per module.
#include <doctest.h>

#include "mkplan/error.hpp"
#include "mkplan/passes.hpp"
#include "mkplan/search.hpp"
#include "support.hpp"

using namespace mkplan;
using namespace mkplan::testing;

namespace {

constexpr auto kSingleGemm = R"({
  "buffers": [
    { "id": "x", "space": "SharedPage", "bytes": 512 },
    { "id": "w", "space": "Global", "bytes": 256 }
  ],
  "operators": [
    { "id": "g", "kind": "Gemm", "dims": { "M": 16, "N": 8, "K": 16 }, "dtype": "%s",
      "inputs": ["x"], "outputs": ["y"], "weight": "w" }
  ]
})";

OperatorGraph single_gemm(const char* dtype) {
  std::string text = kSingleGemm;
  text.replace(text.find("%s"), 2, dtype);
  return load_graph(text);
}

std::size_t count(const MicroOpTrace& t, MicroOpKind kind) {
  return t.count_by_kind()[static_cast<std::size_t>(kind)];
}

DepGraph chain_graph(std::size_t n, const std::vector<std::pair<OpId, OpId>>& edges) {
  std::vector<RawEdge> raw;
  for (auto [a, b] : edges) raw.push_back({a, b, {}});
  return DepGraph(n, raw, {});
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return static_cast<ErrorKind>(0);
}

}  // namespace

TEST_CASE("page budget worked examples") {
  HardwareSpec s;
  CHECK(compute_page_budget(s, 2) == 7);
  CHECK(compute_page_budget(s, 0) == 8);
  s.smem_max = 232448;
  CHECK(compute_page_budget(s, 2) == 13);
  CHECK(compute_page_budget(hw("h100"), 2) == 13);
  CHECK(compute_stage_count(8, 2, 1, 1, 2) == 2);
  CHECK(compute_stage_count(4, 2, 1, 1, 2) == 0);
}

TEST_CASE("hardware invariants") {
  HardwareSpec s;
  CHECK_NOTHROW(s.validate());
  s.page_size = s.smem_max;
  CHECK(kind_of([&] { s.validate(); }) == ErrorKind::ConfigError);
  s = {};
  s.latency[static_cast<std::size_t>(MicroOpKind::Dequant)] = 0;
  CHECK(kind_of([&] { s.validate(); }) == ErrorKind::ConfigError);
  s = {};
  s.banks = 0;
  CHECK(kind_of([&] { s.validate(); }) == ErrorKind::ConfigError);
}

TEST_CASE("bank conflict worked examples") {
  HardwareSpec s;
  CHECK(bank_conflict_factor({4, 1, 32, 0}, s) == 1);
  CHECK(bank_conflict_factor({4, 32, 32, 0}, s) == 32);
  CHECK(bank_conflict_factor({4, 32, 32, 31}, s) < 32);
}

TEST_CASE("micro-op cost worked examples") {
  HardwareSpec s;
  s.latency[static_cast<std::size_t>(MicroOpKind::MmaTile)] = 16;
  s.latency[static_cast<std::size_t>(MicroOpKind::LoadSharedToReg)] = 8;
  s.latency[static_cast<std::size_t>(MicroOpKind::Dequant)] = 4;
  CHECK(micro_op_cost(MicroOpKind::MmaTile, s, 1) == 16);
  CHECK(micro_op_cost(MicroOpKind::LoadSharedToReg, s, 4) == 32);
  CHECK(micro_op_cost(MicroOpKind::Dequant, s, 4) == 4);
}

TEST_CASE("weight byte sizes") {
  CHECK(weight_bytes(128, 256, DType::Fp16).weight == 65536);
  CHECK(weight_bytes(128, 256, DType::Fp16).scale == 0);
  const auto q = weight_bytes(128, 256, DType::Int4W4A16);
  CHECK(q.weight == 16384);
  CHECK(q.scale == 512);
}

TEST_CASE("graph loading") {
  CHECK(single_gemm("fp16").operators.size() == 1);
  CHECK(graph("qwen-decoder-layer").operators.size() == 12);
  const auto dangling = R"({"buffers": [{"id": "w", "space": "Global", "bytes": 256}],
    "operators": [{"id": "g", "kind": "Gemm", "dims": {"M": 16, "N": 8, "K": 16}, "dtype": "fp16",
      "inputs": ["nowhere"], "outputs": ["y"], "weight": "w"}]})";
  CHECK(kind_of([&] { load_graph(dangling); }) == ErrorKind::ValidationError);
  const auto g = graph("qwen-decoder-layer");
  CHECK(load_graph(dump_graph(g)) == g);
}

TEST_CASE("single mma-sized gemm lowers to six ops") {
  const auto t = lower_graph(single_gemm("fp16"), TileConfig{16, 8, 16, 1}, 16384);
  CHECK(t.size() == 6);
  CHECK(count(t, MicroOpKind::GlobalToShared) == 1);
  CHECK(count(t, MicroOpKind::LoadSharedToReg) == 2);
  CHECK(count(t, MicroOpKind::MmaTile) == 1);
  CHECK(count(t, MicroOpKind::Epilogue) == 1);
  CHECK(count(t, MicroOpKind::RegToGlobal) == 1);
  CHECK(count(t, MicroOpKind::Dequant) == 0);
  const auto q = lower_graph(single_gemm("int4_w4a16"), TileConfig{16, 8, 16, 1}, 16384);
  CHECK(q.size() == 7);
  // dequant sits between the weight load and the mma
  std::size_t dq = 0, mma = 0;
  for (const auto& op : q.ops) {
    if (op.kind == MicroOpKind::Dequant) dq = op.id;
    if (op.kind == MicroOpKind::MmaTile) mma = op.id;
  }
  CHECK(dq < mma);
}

TEST_CASE("k_split doubles the load groups and halves weight intervals") {
  const auto g = graph("tiny-gemm");
  const auto a = lower_graph(g, TileConfig{16, 64, 64, 1}, 16384);
  const auto b = lower_graph(g, TileConfig{16, 64, 64, 2}, 16384);
  for (auto k : {MicroOpKind::GlobalToShared, MicroOpKind::LoadSharedToReg, MicroOpKind::MmaTile})
    CHECK(count(b, k) == 2 * count(a, k));
  auto g2s_len = [](const MicroOpTrace& t) {
    for (const auto& op : t.ops)
      if (op.kind == MicroOpKind::GlobalToShared) return op.writes.at(0).length;
    return std::uint64_t{0};
  };
  CHECK(2 * g2s_len(b) == g2s_len(a));
}

TEST_CASE("lowering sizes") {
  CHECK(lower_graph(OperatorGraph{}, TileConfig{}, 16384).empty());
  auto two = graph("tiny-gemm");
  auto second = two.operators.at(0);
  second.id = "gemm2";
  second.inputs = {"x"};
  second.outputs = {"y2"};
  two.operators.push_back(second);
  CHECK(lower_graph(two, TileConfig{}, 16384).size() == 12);
  // frozen at first correct run
  CHECK(lower_graph(graph("qwen-decoder-layer"), TileConfig{64, 64, 64, 1}, 16384).size() == 1158);
}

TEST_CASE("dag worked examples") {
  MicroOpTrace t;
  const auto a = t.intern("A", Space::Global, 64);
  MicroOp w;
  w.writes = {{a, 0, 64, Space::Global}};
  t.ops.push_back(w);
  CHECK(build_dep_graph(t).raw_edges().empty());
  MicroOp r;
  r.id = 1;
  r.reads = {{a, 0, 64, Space::Global}};
  t.ops.push_back(r);
  const auto g = build_dep_graph(t);
  REQUIRE(g.raw_edges().size() == 1);
  CHECK(g.raw_edges()[0].producer == 0);
  CHECK(g.raw_edges()[0].consumer == 1);
}

TEST_CASE("weight prefetches only feed their own operator") {
  const auto t = lower_graph(graph("qwen-decoder-layer"), TileConfig{}, 16384);
  const auto g = build_dep_graph(t);
  for (const auto& e : g.raw_edges())
    if (t.ops[e.producer].kind == MicroOpKind::GlobalToShared)
      CHECK(t.ops[e.consumer].source_operator == t.ops[e.producer].source_operator);
  for (const auto& e : g.raw_edges()) {
    CHECK(e.witness.length > 0);
    CHECK(e.witness.buffer < t.buffers.size());
  }
}

TEST_CASE("critical path worked examples") {
  CHECK(critical_path(chain_graph(3, {{0, 1}, {1, 2}}), std::vector<std::uint64_t>{2, 3, 4}).length == 9);
  const auto diamond = chain_graph(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  const std::vector<std::uint64_t> unit{1, 1, 1, 1};
  const auto cp = critical_path(diamond, unit);
  CHECK(cp.length == 3);
  CHECK(cp.nodes == std::vector<OpId>{0, 1, 3});
  CHECK(node_slack(diamond, unit) == std::vector<std::uint64_t>{0, 0, 0, 0});
  const auto empty = critical_path(DepGraph{}, std::vector<std::uint64_t>{});
  CHECK(empty.length == 0);
  CHECK(empty.nodes.empty());
  // isolated node next to a chain of length 9
  const auto iso = chain_graph(4, {{0, 1}, {1, 2}});
  CHECK(node_slack(iso, std::vector<std::uint64_t>{2, 3, 4, 1})[3] == 8);
}

TEST_CASE("split reduction leaves traces without multi-path reduces alone") {
  const auto t = lower_graph(graph("tiny-gemm"), TileConfig{}, 16384);
  const auto g = build_dep_graph(t);
  const auto s = split_reduction(g, t);
  CHECK(s.reductions_split == 0);
  CHECK(s.trace == t);
}

TEST_CASE("split reduction splits the decoder reduces into partials") {
  const auto t = lower_graph(graph("qwen-decoder-layer"), TileConfig{}, 16384);
  const auto g = build_dep_graph(t);
  const auto s = split_reduction(g, t);
  CHECK(s.reductions_split > 0);
  CHECK(s.trace.size() > t.size());
  CHECK(raw_set(s.graph) == brute_force_raw(s.trace));
}

TEST_CASE("enumeration order and counts") {
  SearchSpace s;
  s.block_n = {64};
  s.block_k = {64};
  s.k_split = {1};
  s.consumer_warps = {16};
  s.n_stage = {2};
  s.prefetch_stride = {1};
  s.swizzle = {0};
  s.reuse_act_weight = s.reuse_act_output = s.split_reduction = {false};
  CHECK(s.size() == 1);
  s.block_n = {64, 128};
  s.n_stage = {3, 4};
  s.prefetch_stride = {1, 2};
  CHECK(s.size() == 8);
  std::vector<std::string> enc;
  for (std::size_t i = 0; i < s.size(); ++i) enc.push_back(s.at(i).encoding());
  CHECK(std::is_sorted(enc.begin(), enc.end()));
}

TEST_CASE("stages beyond the page budget are pruned") {
  SearchSpace s;
  s.block_n = {128};
  s.block_k = {128};
  s.k_split = {1};
  s.consumer_warps = {16};
  s.n_stage = {1, 2, 3, 4};
  s.prefetch_stride = {1};
  s.swizzle = {0};
  s.reuse_act_weight = s.reuse_act_output = s.split_reduction = {false};
  // 32 KiB weight tiles: two pages per stage, at most two stages fit
  const auto e = enumerate_candidates(graph("decode-gemm"), hw("l20"), s);
  for (const auto& c : e.kept) CHECK(c.knobs.n_stage <= 2);
  std::size_t smem = 0;
  for (const auto& [k, why] : e.pruned) smem += why == PruneReason::SmemExceeded;
  CHECK(smem == 2);
}

TEST_CASE("resource filter worked examples") {
  const auto l20 = hw("l20");
  PlanKnobs k;
  k.tile = TileConfig{16, 256, 128, 1};  // 64 KiB weight tile: 4 pages per stage
  k.n_stage = 2;
  const auto big = rebuild_candidate(graph("decode-gemm"), l20, k);
  CHECK(big.pages.peak_pages() > compute_page_budget(l20, 2));
  CHECK(resource_filter(big, l20) == PruneReason::SmemExceeded);
  k.tile.k_split = 2;
  k.n_stage = 2;
  CHECK(!resource_filter(rebuild_candidate(graph("decode-gemm"), l20, k), l20));
  k = {};
  k.warps = {1, 4, 31, 4};
  CHECK(resource_filter(rebuild_candidate(graph("tiny-gemm"), l20, k), l20) == PruneReason::WarpExceeded);
}

TEST_CASE("passes leave ineligible candidates alone") {
  const auto l20 = hw("l20");
  const auto c = rebuild_candidate(graph("tiny-gemm"), l20, PlanKnobs{});
  const auto r = simulate(c, l20);
  const auto rb = apply_role_rebalance(c, r, l20);  // no dequant
  CHECK(!rb.applied);
  CHECK(!rb.simulated);
  const auto q = rebuild_candidate(graph("tiny-gemm-int4"), l20, PlanKnobs{});
  const auto qr = simulate(q, l20);
  CHECK(!apply_role_rebalance(q, qr, l20, 1.0).applied);  // loader never idle enough
  // a single chain has no slack anywhere
  const auto gf = apply_gap_fill(c, r, l20);
  CHECK(!gf.applied);
  CHECK(gf.candidate.role_orders == c.role_orders);
}

TEST_CASE("traces from different hardware differ in the header") {
  const auto g = graph("tiny-gemm");
  const auto s = space("singleton");
  const auto a = solidify(run_search(g, hw("l20"), s), g, hw("l20"), s);
  const auto b = solidify(run_search(g, hw("h100"), s), g, hw("h100"), s);
  CHECK(a.header.hw_hash != b.header.hw_hash);
  CHECK(a.header.graph_hash == b.header.graph_hash);
}
