#include <doctest.h>

#include "mkplan/error.hpp"
#include "mkplan/passes.hpp"
#include "mkplan/search.hpp"
#include "support.hpp"

using namespace mkplan;
using namespace mkplan::testing;

namespace {

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::ValidationError;
}

SearchSpace decode_space() {
  SearchSpace s;
  s.block_n = {64};
  s.block_k = {64};
  s.k_split = {1};
  s.consumer_warps = {16};
  s.n_stage = {2, 4};
  s.prefetch_stride = {1, 3};
  s.swizzle = {7};
  s.reuse_act_weight = {false};
  s.reuse_act_output = {false};
  s.split_reduction = {false};
  s.gap_fill = false;
  s.role_rebalance = false;
  return s;
}

}  // namespace

TEST_CASE("space indexing covers every point once") {
  const auto s = space("default");
  CHECK(s.size() == 4608);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < s.size(); ++i) seen.insert(s.at(i).encoding());
  CHECK(seen.size() == s.size());
}

TEST_CASE("singleton space returns its only point") {
  const auto s = space("singleton");
  CHECK(s.size() == 1);
  const auto r = run_search(graph("tiny-gemm"), hw("l20"), s);
  CHECK(r.winner.knobs == s.at(0));
  CHECK(r.stats.simulated == 1);
}

TEST_CASE("budget one returns the first feasible candidate") {
  const auto s = space("default");
  const auto l20 = hw("l20");
  const auto g = graph("tiny-gemm");
  const auto r = run_search(g, l20, s, SearchOptions{1});
  CHECK(r.stats.simulated == 1);
  CHECK(r.stats.feasible == 1);
  const auto e = enumerate_candidates(g, l20, s);
  REQUIRE(!e.kept.empty());
  CHECK(r.winner.knobs == e.kept.front().knobs);
}

TEST_CASE("four stages beat two on a loader-bound gemm") {
  const auto r = run_search(graph("decode-gemm"), hw("l20"), decode_space());
  CHECK(r.winner.knobs.n_stage == 4);
}

TEST_CASE("no feasible candidate on a tiny shared memory") {
  CHECK(kind_of([] { run_search(graph("tiny-gemm"), hw("tiny-smem"), space("default")); }) ==
        ErrorKind::NoFeasibleCandidate);
}

TEST_CASE("zero budget is rejected") {
  CHECK(kind_of([] { run_search(graph("tiny-gemm"), hw("l20"), space("singleton"), SearchOptions{0}); }) ==
        ErrorKind::ValidationError);
}

TEST_CASE("serial and parallel search agree") {
  const auto g = graph("tiny-gemm-int4");
  const auto l20 = hw("l20");
  const auto s = space("default");
  for (std::size_t budget : {1u, 7u, 100u, 10000u}) {
    SearchOptions serial{budget, false};
    SearchOptions parallel{budget, true, 4};
    const auto a = run_search(g, l20, s, serial);
    const auto b = run_search(g, l20, s, parallel);
    CHECK(a.stats == b.stats);
    CHECK(serialize_trace(solidify(a, g, l20, s)) == serialize_trace(solidify(b, g, l20, s)));
  }
}

TEST_CASE("winner is the best simulated score") {
  const auto g = graph("tiny-gemm-int4");
  const auto l20 = hw("l20");
  SearchOptions o;
  o.keep_scores = true;
  const auto r = run_search(g, l20, space("default"), o);
  REQUIRE(!r.scores.empty());
  ScoredKnobs best = r.scores.front();
  for (const auto& s : r.scores)
    if (better(s, best)) best = s;
  CHECK(best.knobs == r.winner.knobs);
  CHECK(best.makespan == r.report.makespan);
}

TEST_CASE("ranking ties break on makespan then encoding") {
  ScoredKnobs a{{}, 50, 100}, b{{}, 100, 200};
  CHECK(better(a, b));
  CHECK(!better(b, a));
  ScoredKnobs c{{}, 50, 100};
  c.knobs.swizzle = 7;
  CHECK(better(a, c) != better(c, a));
}

TEST_CASE("planner threads honours the environment") {
  setenv("MK_PLANNER_THREADS", "3", 1);
  CHECK(planner_threads() == 3);
  setenv("MK_PLANNER_THREADS", "junk", 1);
  CHECK(planner_threads() >= 1);
  unsetenv("MK_PLANNER_THREADS");
}

TEST_CASE("trace round trip and verification") {
  const auto g = graph("tiny-gemm-int4");
  const auto l20 = hw("l20");
  const auto s = space("default");
  const auto t = solidify(run_search(g, l20, s, SearchOptions{50}), g, l20, s);
  const auto bytes = serialize_trace(t);
  const auto back = parse_trace(bytes);
  CHECK(back == t);
  CHECK(serialize_trace(back) == bytes);
  CHECK(verify_trace(back, g, l20).empty());
  CHECK(!verify_trace(back, graph("tiny-gemm"), l20).empty());
  CHECK(compare_traces(t, back).empty());
}

TEST_CASE("corrupted traces are rejected") {
  const auto g = graph("tiny-gemm");
  const auto l20 = hw("l20");
  const auto s = space("singleton");
  const auto bytes = serialize_trace(solidify(run_search(g, l20, s), g, l20, s));
  auto tampered = bytes;
  const auto at = tampered.find("\"makespan\": ");
  REQUIRE(at != std::string::npos);
  tampered.insert(at + 12, "1");
  CHECK(kind_of([&] { parse_trace(tampered); }) == ErrorKind::ValidationError);
  CHECK(kind_of([&] { parse_trace(bytes.substr(0, bytes.size() / 2)); }) == ErrorKind::ParseError);
  auto versioned = bytes;
  const auto v = versioned.find("\"format_version\": 1");
  REQUIRE(v != std::string::npos);
  versioned.replace(v, 19, "\"format_version\": 9");
  CHECK(kind_of([&] { parse_trace(versioned); }) == ErrorKind::ValidationError);
}

TEST_CASE("comparing traces lists differing fields") {
  const auto g = graph("decode-gemm");
  const auto l20 = hw("l20");
  auto s = decode_space();
  s.n_stage = {2};
  const auto a = solidify(run_search(g, l20, s), g, l20, s);
  s.n_stage = {4};
  const auto b = solidify(run_search(g, l20, s), g, l20, s);
  const auto diff = compare_traces(a, b);
  CHECK(!diff.empty());
  bool stage = false;
  for (const auto& d : diff) stage |= d.field.find("n_stage") != std::string::npos;
  CHECK(stage);
  const auto other = graph("tiny-gemm");
  const auto c = solidify(run_search(other, l20, space("singleton")), other, l20, space("singleton"));
  CHECK(kind_of([&] { compare_traces(a, c); }) == ErrorKind::ValidationError);
}
