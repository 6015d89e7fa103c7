#include "mkplan/io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "mkplan/error.hpp"

namespace mkplan {

using nlohmann::json;

namespace {

json parse(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& ex) {
    fail(ErrorKind::ParseError, std::string(what) + ": " + ex.what());
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!obj.is_object()) fail(ErrorKind::ParseError, path + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(ErrorKind::ParseError, "unknown field " + path + "." + k);
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

// Wraps nlohmann type errors into our ParseError.
template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& ex) {
    fail(ErrorKind::ParseError, std::string(what) + ": " + ex.what());
  }
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingInput, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::MissingInput, "cannot write '" + path + "'");
  out << text;
}

HardwareSpec load_hw(std::string_view text) {
  const json doc = parse(text, "hardware spec");
  HardwareSpec s = guarded("hardware spec", [&] {
    HardwareSpec s;
    check_keys(doc, {"name", "smem_max_bytes", "page_size_bytes", "stage_overhead", "warps_per_sm", "banks",
                     "lane_width", "issue_width", "latency_table"},
               "$");
    maybe(doc, "smem_max_bytes", s.smem_max);
    maybe(doc, "page_size_bytes", s.page_size);
    maybe(doc, "warps_per_sm", s.warps_per_sm);
    maybe(doc, "banks", s.banks);
    maybe(doc, "lane_width", s.lane_width);
    maybe(doc, "issue_width", s.issue_width);
    if (doc.contains("stage_overhead")) {
      const auto& o = doc.at("stage_overhead");
      check_keys(o, {"instr_buf", "semaphores", "scratch"}, "$.stage_overhead");
      maybe(o, "instr_buf", s.overhead.instr_buf);
      maybe(o, "semaphores", s.overhead.semaphores);
      maybe(o, "scratch", s.overhead.scratch);
    }
    if (doc.contains("latency_table")) {
      const auto& l = doc.at("latency_table");
      if (!l.is_object()) fail(ErrorKind::ParseError, "$.latency_table must be an object");
      for (const auto& [k, v] : l.items()) {
        auto kind = parse_kind(k);
        if (!kind) fail(ErrorKind::ConfigError, "unknown micro-op kind $.latency_table." + k);
        s.latency[static_cast<std::size_t>(*kind)] = v.get<std::uint32_t>();
      }
    }
    return s;
  });
  s.validate();
  return s;
}

HardwareSpec load_hw_file(const std::string& path) { return load_hw(read_file(path)); }

std::string dump_hw(const HardwareSpec& s) {
  json lat = json::object();
  for (auto k : kAllKinds) lat[std::string(to_string(k))] = s.latency_of(k);
  return json{{"smem_max_bytes", s.smem_max},
              {"page_size_bytes", s.page_size},
              {"stage_overhead",
               {{"instr_buf", s.overhead.instr_buf},
                {"semaphores", s.overhead.semaphores},
                {"scratch", s.overhead.scratch}}},
              {"warps_per_sm", s.warps_per_sm},
              {"banks", s.banks},
              {"lane_width", s.lane_width},
              {"issue_width", s.issue_width},
              {"latency_table", lat}}
      .dump(2);
}

SearchSpace load_space(std::string_view text) {
  const json doc = parse(text, "search space");
  SearchSpace s = guarded("search space", [&] {
    SearchSpace s;
    check_keys(doc, {"block_m", "block_n", "block_k", "k_split", "consumer_warps", "loader_warps",
                     "storer_warps", "n_stage", "prefetch_stride", "swizzles", "flags"},
               "$");
    maybe(doc, "block_m", s.block_m);
    maybe(doc, "block_n", s.block_n);
    maybe(doc, "block_k", s.block_k);
    maybe(doc, "k_split", s.k_split);
    maybe(doc, "consumer_warps", s.consumer_warps);
    maybe(doc, "loader_warps", s.loader_warps);
    maybe(doc, "storer_warps", s.storer_warps);
    maybe(doc, "n_stage", s.n_stage);
    maybe(doc, "prefetch_stride", s.prefetch_stride);
    maybe(doc, "swizzles", s.swizzle);
    if (doc.contains("flags")) {
      // Plan flags are grids; the two passes are on/off switches.
      const auto& f = doc.at("flags");
      check_keys(f, {"reuse_act_weight", "reuse_act_output", "split_reduction", "gap_fill", "role_rebalance"},
                 "$.flags");
      maybe(f, "reuse_act_weight", s.reuse_act_weight);
      maybe(f, "reuse_act_output", s.reuse_act_output);
      maybe(f, "split_reduction", s.split_reduction);
      maybe(f, "gap_fill", s.gap_fill);
      maybe(f, "role_rebalance", s.role_rebalance);
    }
    return s;
  });
  s.validate();
  return s;
}

SearchSpace load_space_file(const std::string& path) { return load_space(read_file(path)); }

std::string dump_space(const SearchSpace& s) {
  return json{{"block_m", s.block_m},
              {"block_n", s.block_n},
              {"block_k", s.block_k},
              {"k_split", s.k_split},
              {"consumer_warps", s.consumer_warps},
              {"loader_warps", s.loader_warps},
              {"storer_warps", s.storer_warps},
              {"n_stage", s.n_stage},
              {"prefetch_stride", s.prefetch_stride},
              {"swizzles", s.swizzle},
              {"flags",
               {{"reuse_act_weight", s.reuse_act_weight},
                {"reuse_act_output", s.reuse_act_output},
                {"split_reduction", s.split_reduction},
                {"gap_fill", s.gap_fill},
                {"role_rebalance", s.role_rebalance}}}}
      .dump(2);
}

namespace {

json knobs_json(const PlanKnobs& k) {
  return json{{"tile",
               {{"block_m", k.tile.block_m},
                {"block_n", k.tile.block_n},
                {"block_k", k.tile.block_k},
                {"k_split", k.tile.k_split}}},
              {"warps",
               {{"launcher", k.warps.launcher},
                {"loader", k.warps.loader},
                {"consumer", k.warps.consumer},
                {"storer", k.warps.storer}}},
              {"n_stage", k.n_stage},
              {"prefetch_stride", k.prefetch_stride},
              {"swizzle", k.swizzle},
              {"flags",
               {{"reuse_act_weight", k.flags.reuse_act_weight},
                {"reuse_act_output", k.flags.reuse_act_output},
                {"split_reduction", k.flags.split_reduction},
                {"gap_fill", k.flags.gap_fill},
                {"role_rebalance", k.flags.role_rebalance}}}};
}

}  // namespace

PlanKnobs load_knobs(std::string_view text) {
  const json doc = parse(text, "plan");
  PlanKnobs k = guarded("plan", [&] {
    PlanKnobs k;
    check_keys(doc, {"tile", "warps", "n_stage", "prefetch_stride", "swizzle", "flags"}, "$");
    if (doc.contains("tile")) {
      const auto& t = doc.at("tile");
      check_keys(t, {"block_m", "block_n", "block_k", "k_split"}, "$.tile");
      maybe(t, "block_m", k.tile.block_m);
      maybe(t, "block_n", k.tile.block_n);
      maybe(t, "block_k", k.tile.block_k);
      maybe(t, "k_split", k.tile.k_split);
    }
    if (doc.contains("warps")) {
      const auto& w = doc.at("warps");
      check_keys(w, {"launcher", "loader", "consumer", "storer"}, "$.warps");
      maybe(w, "launcher", k.warps.launcher);
      maybe(w, "loader", k.warps.loader);
      maybe(w, "consumer", k.warps.consumer);
      maybe(w, "storer", k.warps.storer);
    }
    maybe(doc, "n_stage", k.n_stage);
    maybe(doc, "prefetch_stride", k.prefetch_stride);
    maybe(doc, "swizzle", k.swizzle);
    if (doc.contains("flags")) {
      const auto& f = doc.at("flags");
      check_keys(f, {"reuse_act_weight", "reuse_act_output", "split_reduction", "gap_fill",
                     "role_rebalance"},
                 "$.flags");
      maybe(f, "reuse_act_weight", k.flags.reuse_act_weight);
      maybe(f, "reuse_act_output", k.flags.reuse_act_output);
      maybe(f, "split_reduction", k.flags.split_reduction);
      maybe(f, "gap_fill", k.flags.gap_fill);
      maybe(f, "role_rebalance", k.flags.role_rebalance);
    }
    return k;
  });
  k.tile.validate();
  if (k.n_stage == 0) fail(ErrorKind::ValidationError, "plan: n_stage must be >= 1");
  return k;
}

PlanKnobs load_knobs_file(const std::string& path) { return load_knobs(read_file(path)); }

std::string dump_knobs(const PlanKnobs& k) { return knobs_json(k).dump(2); }

std::string dump_trace_listing(const MicroOpTrace& trace) {
  json ops = json::array();
  auto ivs = [&](const std::vector<BufferInterval>& v) {
    json a = json::array();
    for (const auto& iv : v)
      a.push_back({{"buffer", trace.buffers[iv.buffer].name},
                   {"offset", iv.offset},
                   {"length", iv.length},
                   {"space", std::string(to_string(iv.space))}});
    return a;
  };
  for (const auto& op : trace.ops) {
    ops.push_back({{"id", op.id},
                   {"kind", std::string(to_string(op.kind))},
                   {"operator", op.source_operator},
                   {"tile", {op.tile.m, op.tile.n, op.tile.k}},
                   {"reads", ivs(op.reads)},
                   {"writes", ivs(op.writes)}});
  }
  json counts = json::object();
  const auto c = trace.count_by_kind();
  for (std::size_t i = 0; i < kNumKinds; ++i) counts[std::string(to_string(kAllKinds[i]))] = c[i];
  json pad = json::array();
  for (const auto& p : trace.padding)
    pad.push_back({{"operator", p.source_operator},
                   {"logical", {p.m, p.n, p.k}},
                   {"padded", {p.m_pad, p.n_pad, p.k_pad}}});
  return json{{"ops", ops}, {"counts", counts}, {"padding", pad}}.dump(2);
}

std::string dump_report(const PlanCandidate& c, const SimReport& r) {
  json stalls = json::object();
  for (std::size_t i = 0; i < kNumStallReasons; ++i)
    stalls[std::string(to_string(static_cast<StallReason>(i)))] = r.stalls[i];
  json busy = json::object();
  for (Role role : kAllRoles) busy[std::string(to_string(role))] = r.busy[static_cast<std::size_t>(role)];
  return json{{"plan", knobs_json(c.knobs)},
              {"encoding", c.knobs.encoding()},
              {"ops", c.trace().ops.size()},
              {"makespan", r.makespan},
              {"duty_cycle", r.duty_cycle()},
              {"stalls", stalls},
              {"busy", busy},
              {"pages",
               {{"peak", c.pages.peak_pages()},
                {"per_stage", c.pages.pages_per_stage},
                {"resident", c.pages.resident_pages},
                {"activation", c.pages.act_pages}}}}
      .dump(2);
}

}  // namespace mkplan
