#include <algorithm>
#include <cstdio>

#include <json.hpp>
#include <openssl/evp.h>

#include "mkplan/error.hpp"
#include "mkplan/io.hpp"
#include "mkplan/passes.hpp"
#include "mkplan/search.hpp"

namespace mkplan {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::ConfigError, "SHA-256 unavailable");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

// Hash canonical re-dumps so formatting of the input files does not matter.
std::string graph_hash(const OperatorGraph& g) { return sha256_hex(dump_graph(g)); }
std::string hw_hash(const HardwareSpec& s) { return sha256_hex(dump_hw(s)); }
std::string space_hash(const SearchSpace& s) { return sha256_hex(dump_space(s)); }

SolidifiedTrace solidify(const PlanCandidate& c, const SimReport& r, const SearchStats& stats,
                         const TraceHeader& header) {
  SolidifiedTrace t;
  t.header = header;
  t.plan = c.knobs;
  t.pages = c.pages;
  t.stats = stats;
  t.score.makespan = r.makespan;
  t.score.productive = r.consumer_productive;
  t.score.stalls = r.stalls;

  const auto& ops = c.trace().ops;
  std::vector<std::vector<std::uint32_t>> pages(ops.size());
  for (const auto& a : c.pages.assignments) {
    for (const auto* list : {&a.fillers, &a.users})
      for (OpId v : *list) pages[v].insert(pages[v].end(), a.pages.begin(), a.pages.end());
  }
  for (auto& p : pages) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
  }
  for (Role role : kAllRoles) {
    for (OpId v : c.role_orders[static_cast<std::size_t>(role)]) {
      const auto& op = ops[v];
      t.roles[static_cast<std::size_t>(role)].push_back(
          TraceOp{v, op.kind, op.source_operator, op.tile, pages[v], r.timing[v].start, r.timing[v].complete});
    }
  }
  return t;
}

SolidifiedTrace solidify(const SearchResult& result, const OperatorGraph& graph, const HardwareSpec& spec,
                         const SearchSpace& space) {
  return solidify(result.winner, result.report, result.stats,
                  TraceHeader{graph_hash(graph), hw_hash(spec), space_hash(space), std::string(kToolVersion)});
}

namespace {

json interval_json(const BufferInterval& iv) {
  return json::array({iv.buffer, iv.offset, iv.length, std::string(to_string(iv.space))});
}

json trace_body(const SolidifiedTrace& t) {
  json assignments = json::array();
  for (const auto& a : t.pages.assignments) {
    json ivs = json::array();
    for (const auto& iv : a.intervals) ivs.push_back(interval_json(iv));
    assignments.push_back({{"pool", std::string(to_string(a.pool))},
                           {"intervals", ivs},
                           {"pages", a.pages},
                           {"fillers", a.fillers},
                           {"users", a.users},
                           {"release", a.release == kNoOp ? json(nullptr) : json(a.release)},
                           {"wait", a.wait}});
  }
  json roles = json::object();
  for (Role role : kAllRoles) {
    json seq = json::array();
    for (const auto& op : t.roles[static_cast<std::size_t>(role)])
      seq.push_back({{"id", op.id},
                     {"kind", std::string(to_string(op.kind))},
                     {"operator", op.source_operator},
                     {"tile", {op.tile.m, op.tile.n, op.tile.k}},
                     {"pages", op.pages},
                     {"start", op.start},
                     {"complete", op.complete}});
    roles[std::string(to_string(role))] = seq;
  }
  json stalls = json::object();
  for (std::size_t i = 0; i < kNumStallReasons; ++i)
    stalls[std::string(to_string(static_cast<StallReason>(i)))] = t.score.stalls[i];
  json pruned = json::object();
  for (std::size_t i = 0; i < t.stats.pruned.size(); ++i)
    pruned[std::string(to_string(static_cast<PruneReason>(i)))] = t.stats.pruned[i];
  return json{{"format_version", t.format_version},
              {"header",
               {{"graph_hash", t.header.graph_hash},
                {"hw_hash", t.header.hw_hash},
                {"space_hash", t.header.space_hash},
                {"tool_version", t.header.tool_version}}},
              {"plan", json::parse(dump_knobs(t.plan))},
              {"pages",
               {{"n_stage", t.pages.n_stage},
                {"prefetch_stride", t.pages.prefetch_stride},
                {"pages_per_stage", t.pages.pages_per_stage},
                {"resident_pages", t.pages.resident_pages},
                {"act_pages", t.pages.act_pages},
                {"assignments", assignments}}},
              {"roles", roles},
              {"score",
               {{"makespan", t.score.makespan},
                {"productive", t.score.productive},
                {"duty_cycle", t.score.duty_cycle()},
                {"stalls", stalls}}},
              {"stats",
               {{"enumerated", t.stats.enumerated},
                {"feasible", t.stats.feasible},
                {"simulated", t.stats.simulated},
                {"pruned", pruned}}}};
}

// Strict reader that reports the path of the offending field.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  Node at(const std::string& key) const {
    if (!j_.is_object()) bad("must be an object");
    if (!j_.contains(key)) fail(ErrorKind::ParseError, "trace: missing field " + path_ + "." + key);
    return Node(j_.at(key), path_ + "." + key);
  }
  Node at(std::size_t i) const { return Node(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }
  void only(std::initializer_list<const char*> keys) const {
    if (!j_.is_object()) bad("must be an object");
    for (const auto& [k, v] : j_.items())
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
        fail(ErrorKind::ParseError, "trace: unknown field " + path_ + "." + k);
  }
  std::size_t size() const {
    if (!j_.is_array()) bad("must be an array");
    return j_.size();
  }
  bool is_null() const { return j_.is_null(); }
  const json& raw() const { return j_; }

  template <typename T>
  T get() const {
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!j_.is_number_unsigned()) bad("must be a non-negative integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (!j_.is_number_integer()) bad("must be an integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j_.is_string()) bad("must be a string");
      }
      return j_.get<T>();
    } catch (const json::exception& ex) {
      fail(ErrorKind::ParseError, "trace: " + path_ + ": " + ex.what());
    }
  }
  template <typename T>
  std::vector<T> list() const {
    std::vector<T> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).get<T>());
    return out;
  }
  [[noreturn]] void bad(const std::string& what) const {
    fail(ErrorKind::ParseError, "trace: " + path_ + " " + what);
  }

 private:
  const json& j_;
  std::string path_;
};

}  // namespace

std::string serialize_trace(const SolidifiedTrace& t) {
  json body = trace_body(t);
  body["content_hash"] = sha256_hex(trace_body(t).dump(1));
  return body.dump(1) + "\n";
}

SolidifiedTrace parse_trace(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& ex) {
    fail(ErrorKind::ParseError, std::string("trace: ") + ex.what());
  }
  const Node root(doc, "$");
  root.only({"format_version", "header", "plan", "pages", "roles", "score", "stats", "content_hash"});
  SolidifiedTrace t;
  t.format_version = root.at("format_version").get<int>();
  if (t.format_version != kTraceFormatVersion)
    fail(ErrorKind::ValidationError, "trace format_version " + std::to_string(t.format_version) +
                                         " is not supported (this tool reads version " +
                                         std::to_string(kTraceFormatVersion) + ")");
  const std::string claimed = root.at("content_hash").get<std::string>();
  json stripped = doc;
  stripped.erase("content_hash");
  if (sha256_hex(stripped.dump(1)) != claimed)
    fail(ErrorKind::ValidationError, "trace content_hash mismatch: file was modified or corrupted");

  const Node h = root.at("header");
  h.only({"graph_hash", "hw_hash", "space_hash", "tool_version"});
  t.header = {h.at("graph_hash").get<std::string>(), h.at("hw_hash").get<std::string>(),
              h.at("space_hash").get<std::string>(), h.at("tool_version").get<std::string>()};

  t.plan = load_knobs(root.at("plan").raw().dump());

  const Node p = root.at("pages");
  p.only({"n_stage", "prefetch_stride", "pages_per_stage", "resident_pages", "act_pages", "assignments"});
  t.pages.n_stage = p.at("n_stage").get<std::uint32_t>();
  t.pages.prefetch_stride = p.at("prefetch_stride").get<std::uint32_t>();
  t.pages.pages_per_stage = p.at("pages_per_stage").get<std::uint32_t>();
  t.pages.resident_pages = p.at("resident_pages").get<std::uint32_t>();
  t.pages.act_pages = p.at("act_pages").get<std::uint32_t>();
  const Node as = p.at("assignments");
  for (std::size_t i = 0; i < as.size(); ++i) {
    const Node a = as.at(i);
    a.only({"pool", "intervals", "pages", "fillers", "users", "release", "wait"});
    PageAssignment pa;
    const auto pool = a.at("pool").get<std::string>();
    if (pool == "stream") pa.pool = PagePool::Stream;
    else if (pool == "resident") pa.pool = PagePool::Resident;
    else if (pool == "activation") pa.pool = PagePool::Activation;
    else a.at("pool").bad("is not a page pool");
    const Node ivs = a.at("intervals");
    for (std::size_t k = 0; k < ivs.size(); ++k) {
      const Node iv = ivs.at(k);
      if (iv.size() != 4) iv.bad("must be [buffer, offset, length, space]");
      auto space = parse_space(iv.at(3).get<std::string>());
      if (!space) iv.at(3).bad("is not a memory space");
      pa.intervals.push_back({iv.at(0).get<BufferId>(), iv.at(1).get<std::uint64_t>(),
                              iv.at(2).get<std::uint64_t>(), *space});
    }
    pa.pages = a.at("pages").list<std::uint32_t>();
    pa.fillers = a.at("fillers").list<OpId>();
    pa.users = a.at("users").list<OpId>();
    pa.release = a.at("release").is_null() ? kNoOp : a.at("release").get<OpId>();
    pa.wait = a.at("wait").list<OpId>();
    t.pages.assignments.push_back(std::move(pa));
  }

  const Node roles = root.at("roles");
  roles.only({"Launcher", "Loader", "Consumer", "Storer"});
  for (Role role : kAllRoles) {
    const Node seq = roles.at(std::string(to_string(role)));
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const Node o = seq.at(i);
      o.only({"id", "kind", "operator", "tile", "pages", "start", "complete"});
      TraceOp op;
      op.id = o.at("id").get<OpId>();
      auto kind = parse_kind(o.at("kind").get<std::string>());
      if (!kind) o.at("kind").bad("is not a micro-op kind");
      op.kind = *kind;
      op.source_operator = o.at("operator").get<std::uint32_t>();
      const auto tile = o.at("tile").list<std::uint32_t>();
      if (tile.size() != 3) o.at("tile").bad("must be [m, n, k]");
      op.tile = {tile[0], tile[1], tile[2]};
      op.pages = o.at("pages").list<std::uint32_t>();
      op.start = o.at("start").get<std::uint64_t>();
      op.complete = o.at("complete").get<std::uint64_t>();
      t.roles[static_cast<std::size_t>(role)].push_back(std::move(op));
    }
  }

  const Node s = root.at("score");
  s.only({"makespan", "productive", "duty_cycle", "stalls"});
  t.score.makespan = s.at("makespan").get<std::uint64_t>();
  t.score.productive = s.at("productive").get<std::uint64_t>();
  const Node st = s.at("stalls");
  for (std::size_t i = 0; i < kNumStallReasons; ++i)
    t.score.stalls[i] = st.at(std::string(to_string(static_cast<StallReason>(i)))).get<std::uint64_t>();
  if (s.at("duty_cycle").get<double>() != t.score.duty_cycle())
    s.at("duty_cycle").bad("disagrees with productive / makespan");

  const Node stats = root.at("stats");
  stats.only({"enumerated", "feasible", "simulated", "pruned"});
  t.stats.enumerated = stats.at("enumerated").get<std::size_t>();
  t.stats.feasible = stats.at("feasible").get<std::size_t>();
  t.stats.simulated = stats.at("simulated").get<std::size_t>();
  const Node pr = stats.at("pruned");
  for (std::size_t i = 0; i < t.stats.pruned.size(); ++i)
    t.stats.pruned[i] = pr.at(std::string(to_string(static_cast<PruneReason>(i)))).get<std::size_t>();
  return t;
}

std::string verify_trace(const SolidifiedTrace& t, const OperatorGraph& graph, const HardwareSpec& spec) {
  if (t.header.graph_hash != graph_hash(graph)) return "graph hash does not match the trace header";
  if (t.header.hw_hash != hw_hash(spec)) return "hardware hash does not match the trace header";
  const PlanCandidate c = rebuild_candidate(graph, spec, t.plan);
  const SimReport r = simulate(c, spec);
  const SolidifiedTrace again = solidify(c, r, t.stats, t.header);
  if (again.score != t.score) return "re-simulated score differs from the embedded score";
  if (again.pages != t.pages) return "re-derived page plan differs from the embedded one";
  if (again.roles != t.roles) return "re-simulated role sequences differ from the embedded ones";
  return {};
}

std::vector<FieldDiff> compare_traces(const SolidifiedTrace& a, const SolidifiedTrace& b) {
  if (a.header.graph_hash != b.header.graph_hash)
    fail(ErrorKind::ValidationError, "cannot compare traces of different graphs");
  std::vector<FieldDiff> out;
  auto cmp = [&](const std::string& field, const auto& x, const auto& y) {
    if (x == y) return;
    json jx = x, jy = y;
    out.push_back({field, jx.dump(), jy.dump()});
  };
  cmp("score.duty_cycle", a.score.duty_cycle(), b.score.duty_cycle());
  cmp("score.makespan", a.score.makespan, b.score.makespan);
  for (std::size_t i = 0; i < kNumStallReasons; ++i)
    cmp("score.stalls." + std::string(to_string(static_cast<StallReason>(i))), a.score.stalls[i], b.score.stalls[i]);
  const json pa = json::parse(dump_knobs(a.plan)), pb = json::parse(dump_knobs(b.plan));
  const json patch = json::diff(pa, pb);
  for (const auto& op : patch) {
    const auto ptr = json::json_pointer(op.at("path").get<std::string>());
    std::string field = "plan" + op.at("path").get<std::string>();
    std::replace(field.begin(), field.end(), '/', '.');
    out.push_back({field, pa.contains(ptr) ? pa.at(ptr).dump() : "null",
                   pb.contains(ptr) ? pb.at(ptr).dump() : "null"});
  }
  for (Role role : kAllRoles) {
    const auto i = static_cast<std::size_t>(role);
    cmp("roles." + std::string(to_string(role)) + ".ops", a.roles[i].size(), b.roles[i].size());
  }
  cmp("pages.peak", a.pages.peak_pages(), b.pages.peak_pages());
  cmp("pages.pages_per_stage", a.pages.pages_per_stage, b.pages.pages_per_stage);
  cmp("pages.resident_pages", a.pages.resident_pages, b.pages.resident_pages);
  cmp("pages.act_pages", a.pages.act_pages, b.pages.act_pages);
  cmp("pages.assignments", a.pages.assignments.size(), b.pages.assignments.size());
  if (a.pages.assignments.size() == b.pages.assignments.size() && a.pages.assignments != b.pages.assignments)
    out.push_back({"pages.assignments.detail", "differs", "differs"});
  return out;
}

}  // namespace mkplan
