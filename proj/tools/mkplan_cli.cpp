// mkplan: offline MegaKernel planner command line.
#include <cstdio>
#include <iostream>
#include <sstream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mkplan/depgraph.hpp"
#include "mkplan/error.hpp"
#include "mkplan/io.hpp"
#include "mkplan/passes.hpp"
#include "mkplan/search.hpp"

using namespace mkplan;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string graph, hw, space, plan, trace, out, chrome;
  std::size_t budget = 10000;
  std::string format = "text";
  bool verbose = false;
  bool serial = false;
};

void require(const std::string& value, const char* flag, const char* cmd) {
  if (value.empty()) fail(ErrorKind::MissingInput, std::string(cmd) + " needs " + flag);
}

void emit(const RunConfig& cfg, const std::string& text) {
  if (cfg.out.empty())
    std::cout << text;
  else
    write_file(cfg.out, text);
}

PlanKnobs knobs_or_default(const RunConfig& cfg) {
  return cfg.plan.empty() ? PlanKnobs{} : load_knobs_file(cfg.plan);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

std::string stall_lines(const std::array<std::uint64_t, kNumStallReasons>& stalls, std::uint64_t makespan) {
  std::ostringstream os;
  for (std::size_t i = 0; i < kNumStallReasons; ++i) {
    os << "    " << to_string(static_cast<StallReason>(i)) << ": " << stalls[i];
    if (makespan) os << " (" << pct(static_cast<double>(stalls[i]) / static_cast<double>(makespan)) << ")";
    os << "\n";
  }
  return os.str();
}

int cmd_lower(const RunConfig& cfg) {
  require(cfg.graph, "--graph", "lower");
  require(cfg.hw, "--hw", "lower");
  const auto graph = load_graph_file(cfg.graph);
  const auto hw = load_hw_file(cfg.hw);
  const auto knobs = knobs_or_default(cfg);
  const auto trace = lower_graph(graph, knobs.tile, hw.page_size);
  const auto pages = plan_pages(trace, {knobs.n_stage, knobs.prefetch_stride, hw.page_size,
                                        knobs.flags.reuse_act_weight, knobs.flags.reuse_act_output});
  const auto budget = compute_page_budget(hw, knobs.n_stage);
  const auto stages = compute_stage_count(budget, 0, pages.resident_pages, pages.act_pages,
                                          std::max<std::uint32_t>(1, pages.pages_per_stage));
  if (!cfg.out.empty()) write_file(cfg.out, dump_trace_listing(trace));
  const auto counts = trace.count_by_kind();
  if (cfg.format == "json") {
    json c = json::object();
    for (std::size_t i = 0; i < kNumKinds; ++i) c[std::string(to_string(kAllKinds[i]))] = counts[i];
    std::cout << json{{"micro_ops", trace.size()},
                      {"counts", c},
                      {"peak_smem_bytes", std::uint64_t{pages.peak_pages()} * hw.page_size},
                      {"page_budget", budget},
                      {"stage_count", stages},
                      {"pages_per_stage", pages.pages_per_stage}}
                     .dump(2)
              << "\n";
    return 0;
  }
  std::cout << "micro-ops: " << trace.size() << "\n";
  for (std::size_t i = 0; i < kNumKinds; ++i) std::cout << "  " << to_string(kAllKinds[i]) << ": " << counts[i] << "\n";
  std::cout << "peak smem: " << std::uint64_t{pages.peak_pages()} * hw.page_size << " bytes (" << pages.peak_pages()
            << " pages: " << pages.pages_per_stage << " per stage x " << knobs.n_stage << ", " << pages.resident_pages
            << " resident, " << pages.act_pages << " activation)\n";
  std::cout << "page budget at " << knobs.n_stage << " stages: " << budget << " pages\n";
  std::cout << "stage count supported: " << stages << "\n";
  if (cfg.verbose)
    for (const auto& p : trace.padding)
      std::cout << "  operator " << p.source_operator << " padded " << p.m << "x" << p.n << "x" << p.k << " -> "
                << p.m_pad << "x" << p.n_pad << "x" << p.k_pad << "\n";
  return 0;
}

int cmd_dag(const RunConfig& cfg) {
  require(cfg.graph, "--graph", "dag");
  require(cfg.hw, "--hw", "dag");
  const auto graph = load_graph_file(cfg.graph);
  const auto hw = load_hw_file(cfg.hw);
  const auto knobs = knobs_or_default(cfg);
  const auto low = lower_for(graph, knobs.tile, knobs.flags.split_reduction, hw.page_size);
  std::vector<std::uint64_t> cost;
  for (const auto& op : low->trace.ops) cost.push_back(micro_op_cost(op, hw));
  const auto cp = critical_path(low->graph, cost);
  if (!cfg.out.empty()) {
    // DOT: RAW edges solid, WAR constraints dashed, critical path bold.
    std::set<OpId> on_path(cp.nodes.begin(), cp.nodes.end());
    std::ostringstream dot;
    dot << "digraph mkplan {\n  rankdir=LR;\n  node [shape=box, fontname=monospace];\n";
    for (OpId v = 0; v < static_cast<OpId>(low->graph.size()); ++v)
      dot << "  n" << v << " [label=\"" << v << " " << to_string(low->trace.ops[v].kind) << "\\n" << cost[v]
          << " cyc\"" << (on_path.count(v) ? ", penwidth=2" : "") << "];\n";
    for (const auto& e : low->graph.raw_edges()) dot << "  n" << e.producer << " -> n" << e.consumer << ";\n";
    for (const auto& w : low->graph.war_constraints())
      dot << "  n" << w.reader << " -> n" << w.overwriter << " [style=dashed, label=\"war\"];\n";
    dot << "}\n";
    write_file(cfg.out, dot.str());
  }
  if (cfg.format == "json") {
    std::cout << json{{"nodes", low->graph.size()},
                      {"raw_edges", low->graph.raw_edges().size()},
                      {"war_constraints", low->graph.war_constraints().size()},
                      {"critical_length", cp.length},
                      {"critical_nodes", cp.nodes.size()}}
                     .dump(2)
              << "\n";
    return 0;
  }
  std::cout << "nodes: " << low->graph.size() << "\nraw edges: " << low->graph.raw_edges().size()
            << "\nwar constraints: " << low->graph.war_constraints().size()
            << "\ncritical path: " << cp.length << " cycles over " << cp.nodes.size() << " ops\n";
  if (cfg.verbose) {
    std::cout << " ";
    for (OpId v : cp.nodes) std::cout << " " << v << ":" << to_string(low->trace.ops[v].kind);
    std::cout << "\n";
  }
  return 0;
}

int cmd_plan(const RunConfig& cfg) {
  require(cfg.graph, "--graph", "plan");
  require(cfg.hw, "--hw", "plan");
  const auto graph = load_graph_file(cfg.graph);
  const auto hw = load_hw_file(cfg.hw);
  const auto c = rebuild_candidate(graph, hw, knobs_or_default(cfg));
  const auto why = resource_filter(c, hw);
  const auto violations = validate_plan(c);
  if (!cfg.out.empty()) write_file(cfg.out, dump_knobs(c.knobs) + "\n");
  std::cout << "candidate: " << c.knobs.encoding() << "\n"
            << "resources: " << (why ? std::string(to_string(*why)) : "fits") << "\n"
            << "pages: peak " << c.pages.peak_pages() << " of " << compute_page_budget(hw, c.knobs.n_stage)
            << " (" << c.pages.pages_per_stage << " per stage, " << c.pages.resident_pages << " resident, "
            << c.pages.act_pages << " activation)\n";
  for (Role role : kAllRoles)
    std::cout << "  " << to_string(role) << ": " << c.role_orders[static_cast<std::size_t>(role)].size() << " ops, "
              << c.knobs.warps.of(role) << " warps\n";
  std::cout << "violations: " << violations.size() << "\n";
  for (const auto& v : violations)
    std::cout << "  " << to_string(v.kind) << " op " << (v.op == kNoOp ? -1 : static_cast<std::int64_t>(v.op))
              << " page " << v.page << ": " << v.message << "\n";
  if (!violations.empty()) return static_cast<int>(ErrorKind::ValidationError);
  return 0;
}

int cmd_simulate(const RunConfig& cfg) {
  require(cfg.graph, "--graph", "simulate");
  require(cfg.hw, "--hw", "simulate");
  const auto graph = load_graph_file(cfg.graph);
  const auto hw = load_hw_file(cfg.hw);
  const auto c = rebuild_candidate(graph, hw, knobs_or_default(cfg));
  if (auto v = validate_plan(c); !v.empty())
    fail(ErrorKind::ValidationError, "plan invalid: " + std::string(to_string(v.front().kind)) + ": " + v.front().message);
  const auto r = simulate(c, hw);
  if (!cfg.chrome.empty()) write_file(cfg.chrome, chrome_trace(c, r));
  if (cfg.format == "json") {
    emit(cfg, dump_report(c, r) + "\n");
    return 0;
  }
  std::ostringstream os;
  os << "candidate: " << c.knobs.encoding() << "\nmakespan: " << r.makespan << " cycles\nduty cycle: "
     << pct(r.duty_cycle()) << "\nconsumer stalls:\n"
     << stall_lines(r.stalls, r.makespan);
  for (Role role : kAllRoles) os << "  " << to_string(role) << " idle " << pct(r.idle_fraction(role)) << "\n";
  emit(cfg, os.str());
  return 0;
}

int cmd_search(const RunConfig& cfg) {
  require(cfg.graph, "--graph", "search");
  require(cfg.hw, "--hw", "search");
  require(cfg.space, "--space", "search");
  const auto graph = load_graph_file(cfg.graph);
  const auto hw = load_hw_file(cfg.hw);
  const auto space = load_space_file(cfg.space);
  SearchOptions opt;
  opt.budget = cfg.budget;
  opt.parallel = !cfg.serial;
  const auto result = run_search(graph, hw, space, opt);
  const auto trace = solidify(result, graph, hw, space);
  const std::string bytes = serialize_trace(trace);
  if (!cfg.out.empty()) write_file(cfg.out, bytes);
  if (cfg.format == "json") {
    std::cout << dump_report(result.winner, result.report) << "\n";
    return 0;
  }
  const auto& s = result.stats;
  std::cout << "winner: " << result.winner.knobs.encoding() << "\n"
            << "  tile " << result.winner.knobs.tile.block_m << "x" << result.winner.knobs.tile.block_n << "x"
            << result.winner.knobs.tile.block_k << " k_split " << result.winner.knobs.tile.k_split << ", "
            << result.winner.knobs.n_stage << " stages, prefetch stride " << result.winner.knobs.prefetch_stride
            << ", swizzle " << result.winner.knobs.swizzle << ", consumer warps " << result.winner.knobs.warps.consumer
            << "\n"
            << "duty cycle: " << pct(result.report.duty_cycle()) << ", makespan " << result.report.makespan
            << " cycles\nconsumer stalls:\n"
            << stall_lines(result.report.stalls, result.report.makespan) << "candidates: " << s.enumerated
            << " enumerated, " << s.feasible << " feasible, " << s.simulated << " simulations\npruned:";
  for (std::size_t i = 0; i < s.pruned.size(); ++i)
    std::cout << " " << to_string(static_cast<PruneReason>(i)) << "=" << s.pruned[i];
  std::cout << "\n";
  if (!cfg.out.empty()) std::cout << "trace: " << cfg.out << "\n";
  return 0;
}

int cmd_validate(const RunConfig& cfg) {
  if (cfg.trace.empty() && cfg.plan.empty()) fail(ErrorKind::MissingInput, "validate needs --trace or --plan");
  if (!cfg.trace.empty()) {
    const auto t = parse_trace(read_file(cfg.trace));
    if (!cfg.graph.empty() || !cfg.hw.empty()) {
      require(cfg.graph, "--graph", "validate");
      require(cfg.hw, "--hw", "validate");
      const auto err = verify_trace(t, load_graph_file(cfg.graph), load_hw_file(cfg.hw));
      if (!err.empty()) fail(ErrorKind::ValidationError, "trace verification failed: " + err);
      std::cout << "trace ok: hashes match and re-simulation reproduces the score\n";
    } else {
      std::cout << "trace ok: well formed, content hash verified\n";
    }
    return 0;
  }
  return cmd_plan(cfg);
}

int cmd_explain(const RunConfig& cfg) {
  require(cfg.trace, "--trace", "explain");
  require(cfg.graph, "--graph", "explain");
  require(cfg.hw, "--hw", "explain");
  const auto t = parse_trace(read_file(cfg.trace));
  const auto graph = load_graph_file(cfg.graph);
  const auto hw = load_hw_file(cfg.hw);
  if (auto err = verify_trace(t, graph, hw); !err.empty())
    fail(ErrorKind::ValidationError, "trace does not match inputs: " + err);
  const auto& k = t.plan;
  std::cout << "winning plan " << k.encoding() << "\n"
            << "  tile " << k.tile.block_m << "x" << k.tile.block_n << "x" << k.tile.block_k << ", k_split "
            << k.tile.k_split << "\n  " << k.n_stage << " pipeline stages, prefetch stride " << k.prefetch_stride
            << ", swizzle mask " << k.swizzle << "\n  warps: launcher " << k.warps.launcher << ", loader "
            << k.warps.loader << ", consumer " << k.warps.consumer << ", storer " << k.warps.storer << "\n"
            << "  pages: " << t.pages.peak_pages() << " peak (" << t.pages.pages_per_stage << " per stage, "
            << t.pages.resident_pages << " resident, " << t.pages.act_pages << " activation)\n"
            << "duty cycle " << pct(t.score.duty_cycle()) << ", makespan " << t.score.makespan << " cycles\n"
            << "consumer stalls:\n"
            << stall_lines(t.score.stalls, t.score.makespan);
  std::cout << "flag ablation (score delta vs. the same plan with the flag off):\n";
  if (t.stats.feasible <= 1) std::cout << "  note: the search saw a single feasible candidate\n";
  struct Flag {
    const char* name;
    bool PlanFlags::*field;
  };
  const Flag flags[] = {{"gap_fill", &PlanFlags::gap_fill},
                        {"role_rebalance", &PlanFlags::role_rebalance},
                        {"reuse_act_weight", &PlanFlags::reuse_act_weight},
                        {"reuse_act_output", &PlanFlags::reuse_act_output},
                        {"split_reduction", &PlanFlags::split_reduction}};
  for (const auto& f : flags) {
    if (!(k.flags.*f.field)) {
      std::cout << "  " << f.name << ": off\n";
      continue;
    }
    PlanKnobs off = k;
    off.flags.*f.field = false;
    const auto c = rebuild_candidate(graph, hw, off);
    const auto r = simulate(c, hw);
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %s: on, duty delta %+.4f, makespan %+lld cycles\n", f.name,
                  t.score.duty_cycle() - r.duty_cycle(),
                  static_cast<long long>(t.score.makespan) - static_cast<long long>(r.makespan));
    std::cout << buf;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mkplan: offline MegaKernel schedule planner"};
  app.require_subcommand(1);
  RunConfig cfg;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--graph", cfg.graph, "operator graph JSON");
    sub->add_option("--hw", cfg.hw, "hardware spec JSON");
    sub->add_option("--space", cfg.space, "search space JSON");
    sub->add_option("--plan", cfg.plan, "plan knobs JSON");
    sub->add_option("--trace", cfg.trace, "solidified trace file");
    sub->add_option("--out", cfg.out, "output path");
    sub->add_option("--budget", cfg.budget, "simulation budget")->check(CLI::PositiveNumber);
    sub->add_option("--format", cfg.format, "report format")->check(CLI::IsMember({"text", "json"}));
    sub->add_flag("--verbose", cfg.verbose, "more detail");
  };
  auto* lower = app.add_subcommand("lower", "lower a graph to micro-ops");
  auto* dag = app.add_subcommand("dag", "build the dependency DAG");
  auto* plan = app.add_subcommand("plan", "materialize and check one plan");
  auto* sim = app.add_subcommand("simulate", "simulate one plan");
  auto* search = app.add_subcommand("search", "search for the best plan and solidify it");
  auto* validate = app.add_subcommand("validate", "check a trace or plan");
  auto* explain = app.add_subcommand("explain", "describe a solidified trace");
  for (auto* s : {lower, dag, plan, sim, search, validate, explain}) add_common(s);
  sim->add_option("--chrome", cfg.chrome, "write a chrome://tracing timeline");
  search->add_flag("--serial", cfg.serial, "evaluate candidates on one thread");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::ParseError);
  }

  try {
    if (*lower) return cmd_lower(cfg);
    if (*dag) return cmd_dag(cfg);
    if (*plan) return cmd_plan(cfg);
    if (*sim) return cmd_simulate(cfg);
    if (*search) return cmd_search(cfg);
    if (*validate) return cmd_validate(cfg);
    if (*explain) return cmd_explain(cfg);
  } catch (const Error& e) {
    std::cerr << "mkplan: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "mkplan: internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
