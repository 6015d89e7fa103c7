// Serial vs OpenMP search timing on a shipped graph.
// usage: search_bench [graph.json] [hw.json] [space.json] [repeats]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "mkplan/error.hpp"
#include "mkplan/io.hpp"
#include "mkplan/search.hpp"

#ifndef MKPLAN_DATA_DIR
#define MKPLAN_DATA_DIR "data"
#endif

using namespace mkplan;

int main(int argc, char** argv) {
  const std::string data = MKPLAN_DATA_DIR;
  const std::string g_path = argc > 1 ? argv[1] : data + "/graphs/qwen-decoder-layer.json";
  const std::string h_path = argc > 2 ? argv[2] : data + "/hw/l20.json";
  const std::string s_path = argc > 3 ? argv[3] : data + "/spaces/default.json";
  const int repeats = argc > 4 ? std::max(1, std::atoi(argv[4])) : 3;
  try {
    const auto graph = load_graph_file(g_path);
    const auto hw = load_hw_file(h_path);
    const auto space = load_space_file(s_path);

    auto time = [&](bool parallel, std::string& bytes) {
      double best = 1e300;
      for (int i = 0; i < repeats; ++i) {
        SearchOptions o;
        o.parallel = parallel;
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = run_search(graph, hw, space, o);
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        bytes = serialize_trace(solidify(r, graph, hw, space));
      }
      return best;
    };
    std::string a, b;
    const double serial = time(false, a);
    const double parallel = time(true, b);
    std::printf("threads   %u\nserial    %.3fs\nparallel  %.3fs\nspeedup   %.2fx\ntraces    %s\n", planner_threads(),
                serial, parallel, serial / parallel, a == b ? "identical" : "DIFFER");
    return a == b ? 0 : 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "search_bench: %s\n", e.what());
    return e.exit_code();
  }
}
