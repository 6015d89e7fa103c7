#include "mkplan/search.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <map>
#include <optional>
#include <set>

#include <omp.h>

#include "mkplan/error.hpp"
#include "mkplan/passes.hpp"

namespace mkplan {

bool better(const ScoredKnobs& a, const ScoredKnobs& b) {
  using u128 = unsigned __int128;
  const u128 lhs = static_cast<u128>(a.productive) * b.makespan;
  const u128 rhs = static_cast<u128>(b.productive) * a.makespan;
  if (lhs != rhs) return lhs > rhs;
  if (a.makespan != b.makespan) return a.makespan < b.makespan;
  return a.knobs.encoding() < b.knobs.encoding();
}

unsigned planner_threads() {
  if (const char* env = std::getenv("MK_PLANNER_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::max(1, omp_get_max_threads()));
}

namespace {

using LoweringKey = std::pair<TileConfig, bool>;

struct Variant {
  bool simulated = false;
  bool applied = false;
  ScoredKnobs score;
};

struct Evaluation {
  std::optional<PruneReason> pruned;
  Variant base, gap_fill, rebalance;
  std::exception_ptr error;
};

ScoredKnobs score_of(const PlanCandidate& c, const SimReport& r) {
  return ScoredKnobs{c.knobs, r.consumer_productive, r.makespan};
}

class Evaluator {
 public:
  Evaluator(const OperatorGraph& graph, const HardwareSpec& spec, const SearchSpace& space)
      : spec_(spec), space_(space) {
    // Lower every tile shape up front so workers only read the cache.
    for (auto bm : space.block_m)
      for (auto bn : space.block_n)
        for (auto bk : space.block_k)
          for (auto ks : space.k_split)
            for (bool split : space.split_reduction) {
              const TileConfig t{bm, bn, bk, ks};
              const LoweringKey key{t, split};
              if (cache_.contains(key)) continue;
              try {
                t.validate();
                cache_.emplace(key, lower_for(graph, t, split, spec.page_size));
              } catch (const Error& e) {
                if (e.kind() != ErrorKind::ConfigError && e.kind() != ErrorKind::ValidationError) throw;
                cache_.emplace(key, nullptr);
              }
            }
  }

  Evaluation operator()(std::size_t index) const {
    Evaluation ev;
    try {
      const PlanKnobs k = space_.at(index);
      const auto& lowered = cache_.at(LoweringKey{k.tile, k.flags.split_reduction});
      if (!lowered) {
        ev.pruned = PruneReason::TileInvalid;
        return ev;
      }
      PlanCandidate c = materialize(k, lowered, spec_);
      if ((ev.pruned = resource_filter(c, spec_))) return ev;
      const SimReport r = simulate(c, spec_);
      ev.base = Variant{true, true, score_of(c, r)};
      if (space_.gap_fill) {
        const auto v = apply_gap_fill(c, r, spec_);
        ev.gap_fill = Variant{v.simulated, v.applied, score_of(v.candidate, v.report)};
      }
      if (space_.role_rebalance) {
        const auto v = apply_role_rebalance(c, r, spec_);
        ev.rebalance = Variant{v.simulated, v.applied, score_of(v.candidate, v.report)};
      }
    } catch (...) {
      ev.error = std::current_exception();
    }
    return ev;
  }

 private:
  const HardwareSpec& spec_;
  const SearchSpace& space_;
  std::map<LoweringKey, std::shared_ptr<const Lowered>> cache_;
};

// Sequential budget accounting over evaluations in enumeration order.
class Reducer {
 public:
  Reducer(std::size_t budget, bool keep) : remaining_(budget), keep_(keep) {}

  bool exhausted() const { return remaining_ == 0; }
  std::size_t remaining() const { return remaining_; }

  void take(const Evaluation& ev) {
    if (ev.error) std::rethrow_exception(ev.error);
    ++stats.enumerated;
    if (ev.pruned) {
      ++stats.pruned[static_cast<std::size_t>(*ev.pruned)];
      return;
    }
    ++stats.feasible;
    charge(ev.base);
    charge(ev.gap_fill);
    charge(ev.rebalance);
  }

  SearchStats stats;
  std::optional<ScoredKnobs> best;
  std::vector<ScoredKnobs> scores;

 private:
  void charge(const Variant& v) {
    if (!v.simulated || remaining_ == 0) return;
    --remaining_;
    ++stats.simulated;
    if (!v.applied) return;
    if (keep_) scores.push_back(v.score);
    if (!best || better(v.score, *best)) best = v.score;
  }

  std::size_t remaining_;
  bool keep_;
};

std::string histogram(const SearchStats& s) {
  std::string out;
  for (std::size_t i = 0; i < s.pruned.size(); ++i)
    out += " " + std::string(to_string(static_cast<PruneReason>(i))) + "=" + std::to_string(s.pruned[i]);
  return out;
}

}  // namespace

SearchResult run_search(const OperatorGraph& graph, const HardwareSpec& spec, const SearchSpace& space,
                        const SearchOptions& options) {
  if (options.budget == 0) fail(ErrorKind::ValidationError, "search budget must be >= 1");
  space.validate();
  const Evaluator evaluate(graph, spec, space);
  Reducer reduce(options.budget, options.keep_scores);
  const std::size_t total = space.size();

  if (!options.parallel) {
    for (std::size_t i = 0; i < total && !reduce.exhausted(); ++i) reduce.take(evaluate(i));
  } else {
    const unsigned threads = options.threads ? options.threads : planner_threads();
    std::vector<Evaluation> chunk;
    for (std::size_t next = 0; next < total && !reduce.exhausted();) {
      const std::size_t width = std::clamp<std::size_t>(reduce.remaining(), 1, std::size_t{threads} * 8);
      const std::size_t end = std::min(total, next + width);
      chunk.assign(end - next, Evaluation{});
      const auto count = static_cast<std::int64_t>(chunk.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
      for (std::int64_t j = 0; j < count; ++j) chunk[static_cast<std::size_t>(j)] = evaluate(next + static_cast<std::size_t>(j));
      for (const auto& ev : chunk) {
        if (reduce.exhausted()) break;
        reduce.take(ev);
      }
      next = end;
    }
  }

  if (!reduce.best)
    fail(ErrorKind::NoFeasibleCandidate,
         "no feasible candidate among " + std::to_string(reduce.stats.enumerated) + " enumerated; pruned:" +
             histogram(reduce.stats));

  SearchResult out;
  out.stats = reduce.stats;
  out.scores = std::move(reduce.scores);
  out.winner = rebuild_candidate(graph, spec, reduce.best->knobs);
  out.report = simulate(out.winner, spec);
  if (out.report.makespan != reduce.best->makespan ||
      out.report.consumer_productive != reduce.best->productive)
    fail(ErrorKind::ValidationError, "internal: rebuilt winner does not reproduce its score");
  return out;
}

}  // namespace mkplan
