#include "mkplan/graph_ir.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mkplan/error.hpp"

namespace mkplan {

using nlohmann::json;

namespace {

constexpr std::uint64_t kActBytes = 2;  // fp16 activations
constexpr std::uint64_t kAccBytes = 4;  // fp32 accumulators

std::uint64_t round_up(std::uint64_t v, std::uint64_t m) { return (v + m - 1) / m * m; }
std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

struct Emitter {
  MicroOpTrace& trace;
  std::uint64_t page_size;
  std::uint32_t source;

  void push(std::vector<BufferInterval>& dst, BufferId buf, std::uint64_t offset,
            std::uint64_t length) const {
    const Space space = trace.buffers[buf].space;
    if (space != Space::SharedPage) {
      dst.push_back({buf, offset, length, space});
      return;
    }
    // Shared-page intervals never straddle more than one page.
    for (std::uint64_t at = 0; at < length; at += page_size) {
      dst.push_back({buf, offset + at, std::min(page_size, length - at), space});
    }
  }

  MicroOp& emit(MicroOpKind kind, TileCoord tile) {
    MicroOp op;
    op.id = static_cast<OpId>(trace.ops.size());
    op.kind = kind;
    op.tile = tile;
    op.source_operator = source;
    trace.ops.push_back(std::move(op));
    return trace.ops.back();
  }
};

Space declared_space(const OperatorGraph& g, const std::string& id, Space fallback) {
  if (const auto* b = g.find_buffer(id)) return b->space;
  return fallback;
}

// Activation-style buffers are laid out m-block major, then column major
// inside the block, so a (m-block, column range) tile is one contiguous run.
struct ActLayout {
  std::uint64_t cols = 0;
  std::uint64_t block_m = 0;
  std::uint64_t offset(std::uint64_t mb, std::uint64_t c0) const {
    return (mb * cols + c0) * block_m * kActBytes;
  }
  std::uint64_t length(std::uint64_t c0, std::uint64_t c1) const {
    return (c1 - c0) * block_m * kActBytes;
  }
};

void lower_gemm(const OperatorGraph& g, const Operator& op, const TileConfig& t,
                Emitter& e) {
  auto& trace = e.trace;
  const std::uint64_t mp = round_up(op.dims.m, t.block_m);
  const std::uint64_t np = round_up(op.dims.n, t.block_n);
  const std::uint64_t kp = round_up(op.dims.k, t.block_k);
  trace.padding.push_back({e.source, op.dims.m, op.dims.n, op.dims.k, mp, np, kp});

  const std::uint64_t nb_m = mp / t.block_m;
  const std::uint64_t nb_n = np / t.block_n;
  const std::uint64_t nk = (kp / t.block_k) * t.k_split;  // k sub-iterations
  const std::uint64_t sub_k = t.sub_k();
  const WeightBytes sub = weight_tile_bytes(t, op.dtype);
  const bool int4 = op.dtype == DType::Int4W4A16;

  const std::string& x_name = op.inputs.at(0);
  const std::string& w_name = *op.weight;
  const std::string& y_name = op.outputs.at(0);
  const ActLayout x_layout{kp, t.block_m};
  const ActLayout y_layout{np, t.block_m};

  const Space x_space = declared_space(g, x_name, Space::SharedPage);
  const BufferId x = trace.intern(x_name, x_space, mp * kp * kActBytes);
  std::optional<BufferId> x_smem;
  if (x_space == Space::Global)
    x_smem = trace.intern(x_name + ".smem", Space::SharedPage, mp * kp * kActBytes);

  const BufferId w = trace.intern(w_name, Space::Global, nb_n * nk * sub.weight);
  const BufferId w_smem = trace.intern(w_name + ".smem", Space::SharedPage, nb_n * nk * sub.weight);
  // Group scales stay resident in shared memory for the whole operator.
  std::optional<BufferId> s_smem;
  if (int4) s_smem = trace.intern(w_name + ".scale", Space::SharedPage, nb_n * nk * sub.scale);
  const std::uint64_t a_bytes = t.block_m * sub_k * kActBytes;
  const std::uint64_t tile_out = std::uint64_t{t.block_m} * t.block_n;
  const BufferId areg = trace.intern(op.id + ".areg", Space::Register, a_bytes);
  const BufferId wreg = trace.intern(op.id + ".wreg", Space::Register, sub.weight);
  const BufferId acc = trace.intern(op.id + ".acc", Space::Register, nb_m * nb_n * tile_out * kAccBytes);
  const BufferId oreg = trace.intern(op.id + ".out.reg", Space::Register, nb_m * nb_n * tile_out * kActBytes);
  const BufferId y = trace.intern(y_name, declared_space(g, y_name, Space::SharedPage), mp * np * kActBytes);
  std::optional<BufferId> red;
  if (op.kind == OperatorKind::LmHead)
    red = trace.intern(op.id + ".red", Space::Register, mp * kAccBytes);

  for (std::uint64_t mb = 0; mb < nb_m; ++mb) {
    for (std::uint64_t nb = 0; nb < nb_n; ++nb) {
      const std::uint64_t tile_idx = mb * nb_n + nb;
      for (std::uint64_t ki = 0; ki < nk; ++ki) {
        const TileCoord tc{static_cast<std::uint32_t>(mb), static_cast<std::uint32_t>(nb),
                           static_cast<std::uint32_t>(ki)};
        const std::uint64_t w_off = (nb * nk + ki) * sub.weight;
        {
          auto& ld = e.emit(MicroOpKind::GlobalToShared, tc);
          e.push(ld.reads, w, w_off, sub.weight);
          e.push(ld.writes, w_smem, w_off, sub.weight);
        }
        const std::uint64_t c0 = ki * sub_k, c1 = c0 + sub_k;
        if (x_smem) {
          auto& ld = e.emit(MicroOpKind::GlobalToShared, tc);
          e.push(ld.reads, x, x_layout.offset(mb, c0), x_layout.length(c0, c1));
          e.push(ld.writes, *x_smem, x_layout.offset(mb, c0), x_layout.length(c0, c1));
        }
        {
          auto& la = e.emit(MicroOpKind::LoadSharedToReg, tc);
          la.smem_pitch = static_cast<std::uint32_t>(sub_k * kActBytes);
          e.push(la.reads, x_smem ? *x_smem : x, x_layout.offset(mb, c0), x_layout.length(c0, c1));
          e.push(la.writes, areg, 0, a_bytes);
        }
        {
          auto& lw = e.emit(MicroOpKind::LoadSharedToReg, tc);
          lw.smem_pitch = static_cast<std::uint32_t>(int4 ? sub_k / 2 : sub_k * 2);
          e.push(lw.reads, w_smem, w_off, sub.weight);
          if (int4) e.push(lw.reads, *s_smem, (nb * nk + ki) * sub.scale, sub.scale);
          e.push(lw.writes, wreg, 0, sub.weight);
        }
        if (int4) {
          auto& dq = e.emit(MicroOpKind::Dequant, tc);
          e.push(dq.reads, wreg, 0, sub.weight);
          e.push(dq.writes, wreg, 0, sub.weight);
        }
        {
          auto& mma = e.emit(MicroOpKind::MmaTile, tc);
          e.push(mma.reads, areg, 0, a_bytes);
          e.push(mma.reads, wreg, 0, sub.weight);
          if (ki > 0) e.push(mma.reads, acc, tile_idx * tile_out * kAccBytes, tile_out * kAccBytes);
          e.push(mma.writes, acc, tile_idx * tile_out * kAccBytes, tile_out * kAccBytes);
        }
      }
      const TileCoord tc{static_cast<std::uint32_t>(mb), static_cast<std::uint32_t>(nb), 0};
      {
        auto& ep = e.emit(MicroOpKind::Epilogue, tc);
        e.push(ep.reads, acc, tile_idx * tile_out * kAccBytes, tile_out * kAccBytes);
        e.push(ep.writes, oreg, tile_idx * tile_out * kActBytes, tile_out * kActBytes);
      }
      if (red) {
        auto& rd = e.emit(MicroOpKind::Reduce, tc);
        e.push(rd.reads, oreg, tile_idx * tile_out * kActBytes, tile_out * kActBytes);
        if (nb > 0) e.push(rd.reads, *red, mb * t.block_m * kAccBytes, t.block_m * kAccBytes);
        e.push(rd.writes, *red, mb * t.block_m * kAccBytes, t.block_m * kAccBytes);
      }
      {
        auto& st = e.emit(MicroOpKind::RegToGlobal, tc);
        e.push(st.reads, oreg, tile_idx * tile_out * kActBytes, tile_out * kActBytes);
        const std::uint64_t n0 = nb * t.block_n;
        e.push(st.writes, y, y_layout.offset(mb, n0), y_layout.length(n0, n0 + t.block_n));
      }
    }
  }
}

// Element-wise operators stream tiles of block_m x block_n elements.
void lower_elementwise(const OperatorGraph& g, const Operator& op, const TileConfig& t,
                       Emitter& e) {
  auto& trace = e.trace;
  const std::uint64_t mp = round_up(op.dims.m, t.block_m);
  const std::uint64_t np = round_up(op.dims.n, t.block_n);
  trace.padding.push_back({e.source, op.dims.m, op.dims.n, op.dims.k, mp, np, op.dims.k});
  const std::uint64_t nb_m = mp / t.block_m;
  const std::uint64_t nt = np / t.block_n;
  const std::uint64_t tile_elems = std::uint64_t{t.block_m} * t.block_n;
  const std::uint64_t tile_bytes = tile_elems * kActBytes;
  const ActLayout layout{np, t.block_m};
  const bool reducing = op.kind == OperatorKind::RmsNorm || op.kind == OperatorKind::Softmax;
  const bool gated = op.kind == OperatorKind::Swiglu;

  // Operand views: (buffer, column offset inside the buffer, layout).
  struct Operand {
    BufferId src;
    std::optional<BufferId> smem;
    ActLayout layout;
    std::uint64_t col0 = 0;
    bool vector = false;  // per-column parameter such as an RmsNorm gamma
  };
  std::vector<Operand> operands;
  auto add_operand = [&](const std::string& name, std::uint64_t cols, std::uint64_t col0,
                         bool vector) {
    const Space sp = declared_space(g, name, vector ? Space::Global : Space::SharedPage);
    const std::uint64_t bytes = vector ? cols * kActBytes : mp * cols * kActBytes;
    Operand o{trace.intern(name, sp, bytes), std::nullopt, ActLayout{cols, t.block_m}, col0, vector};
    if (sp == Space::Global) o.smem = trace.intern(name + ".smem", Space::SharedPage, bytes);
    operands.push_back(o);
  };
  if (gated && op.inputs.size() == 1) {
    add_operand(op.inputs[0], 2 * np, 0, false);
    add_operand(op.inputs[0], 2 * np, np, false);
  } else {
    for (const auto& in : op.inputs) add_operand(in, np, 0, false);
  }
  if (op.weight) add_operand(*op.weight, np, 0, true);

  auto interval_of = [&](const Operand& o, std::uint64_t mb, std::uint64_t c0,
                         std::uint64_t c1) -> std::pair<std::uint64_t, std::uint64_t> {
    if (o.vector) return {c0 * kActBytes, (c1 - c0) * kActBytes};
    return {o.layout.offset(mb, o.col0 + c0), o.layout.length(c0, c1)};
  };

  const BufferId oreg = trace.intern(op.id + ".out.reg", Space::Register, nb_m * nt * tile_bytes);
  const BufferId y = trace.intern(op.outputs.at(0), declared_space(g, op.outputs.at(0), Space::SharedPage),
                                  mp * np * kActBytes);
  std::optional<BufferId> red, gate_reg;
  if (reducing) red = trace.intern(op.id + ".red", Space::Register, mp * kAccBytes);
  if (gated) gate_reg = trace.intern(op.id + ".gated", Space::Register, nb_m * nt * tile_elems * kAccBytes);
  std::vector<BufferId> in_regs;
  if (!gated) {
    for (std::size_t j = 0; j < operands.size(); ++j)
      in_regs.push_back(trace.intern(op.id + ".in" + std::to_string(j) + ".reg", Space::Register, tile_bytes));
  }

  auto emit_store = [&](std::uint64_t mb, std::uint64_t ti) {
    const TileCoord tc{static_cast<std::uint32_t>(mb), static_cast<std::uint32_t>(ti), 0};
    const std::uint64_t idx = mb * nt + ti;
    auto& st = e.emit(MicroOpKind::RegToGlobal, tc);
    e.push(st.reads, oreg, idx * tile_bytes, tile_bytes);
    if (red) e.push(st.reads, *red, mb * t.block_m * kAccBytes, t.block_m * kAccBytes);
    const std::uint64_t c0 = ti * t.block_n;
    e.push(st.writes, y, layout.offset(mb, c0), layout.length(c0, c0 + t.block_n));
  };

  for (std::uint64_t mb = 0; mb < nb_m; ++mb) {
    for (std::uint64_t ti = 0; ti < nt; ++ti) {
      const TileCoord tc{static_cast<std::uint32_t>(mb), static_cast<std::uint32_t>(ti), 0};
      const std::uint64_t idx = mb * nt + ti;
      const std::uint64_t c0 = ti * t.block_n, c1 = c0 + t.block_n;
      for (const auto& o : operands) {
        if (!o.smem) continue;
        auto [off, len] = interval_of(o, mb, c0, c1);
        auto& ld = e.emit(MicroOpKind::GlobalToShared, tc);
        e.push(ld.reads, o.src, off, len);
        e.push(ld.writes, *o.smem, off, len);
      }
      if (gated) {
        // The gate combine reads both paths straight from shared memory.
        auto& rd = e.emit(MicroOpKind::Reduce, tc);
        for (const auto& o : operands) {
          auto [off, len] = interval_of(o, mb, c0, c1);
          e.push(rd.reads, o.smem ? *o.smem : o.src, off, len);
        }
        e.push(rd.writes, *gate_reg, idx * tile_elems * kAccBytes, tile_elems * kAccBytes);
        auto& ep = e.emit(MicroOpKind::Epilogue, tc);
        e.push(ep.reads, *gate_reg, idx * tile_elems * kAccBytes, tile_elems * kAccBytes);
        e.push(ep.writes, oreg, idx * tile_bytes, tile_bytes);
        emit_store(mb, ti);
        continue;
      }
      for (std::size_t j = 0; j < operands.size(); ++j) {
        const auto& o = operands[j];
        auto [off, len] = interval_of(o, mb, c0, c1);
        auto& la = e.emit(MicroOpKind::LoadSharedToReg, tc);
        la.smem_pitch = static_cast<std::uint32_t>(t.block_n * kActBytes);
        e.push(la.reads, o.smem ? *o.smem : o.src, off, len);
        e.push(la.writes, in_regs[j], 0, tile_bytes);
      }
      auto& ep = e.emit(MicroOpKind::Epilogue, tc);
      for (auto r : in_regs) e.push(ep.reads, r, 0, tile_bytes);
      e.push(ep.writes, oreg, idx * tile_bytes, tile_bytes);
      if (reducing) {
        auto& rd = e.emit(MicroOpKind::Reduce, tc);
        e.push(rd.reads, oreg, idx * tile_bytes, tile_bytes);
        if (ti > 0) e.push(rd.reads, *red, mb * t.block_m * kAccBytes, t.block_m * kAccBytes);
        e.push(rd.writes, *red, mb * t.block_m * kAccBytes, t.block_m * kAccBytes);
      } else {
        emit_store(mb, ti);
      }
    }
    // Normalized outputs need the completed row reduction.
    if (reducing)
      for (std::uint64_t ti = 0; ti < nt; ++ti) emit_store(mb, ti);
  }
}

}  // namespace

std::string_view to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::RmsNorm: return "RmsNorm";
    case OperatorKind::Gemm: return "Gemm";
    case OperatorKind::AttentionQK: return "AttentionQK";
    case OperatorKind::Softmax: return "Softmax";
    case OperatorKind::AttentionPV: return "AttentionPV";
    case OperatorKind::Swiglu: return "Swiglu";
    case OperatorKind::ResidualAdd: return "ResidualAdd";
    case OperatorKind::LmHead: return "LmHead";
  }
  return "?";
}

std::optional<OperatorKind> parse_operator_kind(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(OperatorKind::LmHead); ++i) {
    auto k = static_cast<OperatorKind>(i);
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(DType dtype) {
  return dtype == DType::Fp16 ? "fp16" : "int4_w4a16";
}

std::optional<DType> parse_dtype(std::string_view name) {
  if (name == "fp16") return DType::Fp16;
  if (name == "int4_w4a16") return DType::Int4W4A16;
  return std::nullopt;
}

bool is_gemm_like(OperatorKind kind) {
  return kind == OperatorKind::Gemm || kind == OperatorKind::AttentionQK ||
         kind == OperatorKind::AttentionPV || kind == OperatorKind::LmHead;
}

const GraphBuffer* OperatorGraph::find_buffer(std::string_view id) const {
  for (const auto& b : buffers)
    if (b.id == id) return &b;
  return nullptr;
}

void OperatorGraph::validate() const {
  std::set<std::string> known;
  for (const auto& b : buffers) {
    if (!known.insert(b.id).second)
      fail(ErrorKind::ValidationError, "duplicate buffer id '" + b.id + "'");
  }
  std::set<std::string> op_ids;
  for (const auto& op : operators) {
    const std::string where = "operator '" + op.id + "'";
    if (!op_ids.insert(op.id).second) fail(ErrorKind::ValidationError, "duplicate " + where);
    if (op.dims.m == 0 || op.dims.n == 0)
      fail(ErrorKind::ValidationError, where + ": dims must be positive");
    if (is_gemm_like(op.kind)) {
      if (op.dims.k == 0) fail(ErrorKind::ValidationError, where + ": Gemm requires M, N, K");
      if (!op.weight) fail(ErrorKind::ValidationError, where + ": Gemm-shaped operator needs a weight");
      if (op.inputs.size() != 1)
        fail(ErrorKind::ValidationError, where + ": expects exactly one activation input");
    }
    if (op.inputs.empty()) fail(ErrorKind::ValidationError, where + ": no inputs");
    if (op.outputs.size() != 1) fail(ErrorKind::ValidationError, where + ": expects one output");
    for (const auto& in : op.inputs) {
      if (!known.count(in))
        fail(ErrorKind::ValidationError, where + ": dangling buffer reference '" + in + "'");
    }
    if (op.weight && !find_buffer(*op.weight))
      fail(ErrorKind::ValidationError, where + ": dangling weight reference '" + *op.weight + "'");
    if (op.kind == OperatorKind::Swiglu && op.inputs.size() > 2)
      fail(ErrorKind::ValidationError, where + ": Swiglu takes one fused or two inputs");
    for (const auto& out : op.outputs) known.insert(out);
  }
}

OperatorGraph load_graph(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& ex) {
    fail(ErrorKind::ParseError, std::string("graph: ") + ex.what());
  }
  auto need = [](const json& obj, const char* key, const std::string& path) -> const json& {
    if (!obj.is_object() || !obj.contains(key))
      fail(ErrorKind::ParseError, "graph: missing field " + path + "." + key);
    return obj.at(key);
  };
  auto check_keys = [](const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& path) {
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) fail(ErrorKind::ParseError, "graph: unknown field " + path + "." + k);
    }
  };
  OperatorGraph g;
  try {
    check_keys(doc, {"buffers", "operators"}, "$");
    if (doc.contains("buffers")) {
      std::size_t i = 0;
      for (const auto& b : doc.at("buffers")) {
        const std::string path = "buffers[" + std::to_string(i++) + "]";
        check_keys(b, {"id", "space", "bytes"}, path);
        GraphBuffer gb;
        gb.id = need(b, "id", path).get<std::string>();
        auto sp = parse_space(need(b, "space", path).get<std::string>());
        if (!sp) fail(ErrorKind::ParseError, "graph: bad space at " + path);
        gb.space = *sp;
        gb.bytes = need(b, "bytes", path).get<std::uint64_t>();
        g.buffers.push_back(gb);
      }
    }
    std::size_t i = 0;
    for (const auto& o : need(doc, "operators", "$")) {
      const std::string path = "operators[" + std::to_string(i++) + "]";
      check_keys(o, {"id", "kind", "dims", "dtype", "inputs", "outputs", "weight"}, path);
      Operator op;
      op.id = need(o, "id", path).get<std::string>();
      auto kind = parse_operator_kind(need(o, "kind", path).get<std::string>());
      if (!kind) fail(ErrorKind::ParseError, "graph: unknown kind at " + path);
      op.kind = *kind;
      const auto& d = need(o, "dims", path);
      check_keys(d, {"M", "N", "K"}, path + ".dims");
      auto dim = [&](const char* key) -> std::uint64_t {
        if (!d.contains(key)) return 0;
        const auto v = d.at(key).get<std::int64_t>();
        if (v <= 0)
          fail(ErrorKind::ValidationError, "graph: non-positive dim " + path + ".dims." + key);
        return static_cast<std::uint64_t>(v);
      };
      op.dims = {dim("M"), dim("N"), dim("K")};
      if (o.contains("dtype")) {
        auto dt = parse_dtype(o.at("dtype").get<std::string>());
        if (!dt) fail(ErrorKind::ParseError, "graph: unknown dtype at " + path);
        op.dtype = *dt;
      }
      op.inputs = need(o, "inputs", path).get<std::vector<std::string>>();
      op.outputs = need(o, "outputs", path).get<std::vector<std::string>>();
      if (o.contains("weight") && !o.at("weight").is_null())
        op.weight = o.at("weight").get<std::string>();
      g.operators.push_back(std::move(op));
    }
  } catch (const json::exception& ex) {
    fail(ErrorKind::ParseError, std::string("graph: ") + ex.what());
  }
  g.validate();
  return g;
}

OperatorGraph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingInput, "cannot open graph file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_graph(ss.str());
}

std::string dump_graph(const OperatorGraph& graph) {
  json doc;
  doc["buffers"] = json::array();
  for (const auto& b : graph.buffers)
    doc["buffers"].push_back({{"id", b.id}, {"space", to_string(b.space)}, {"bytes", b.bytes}});
  doc["operators"] = json::array();
  for (const auto& op : graph.operators) {
    json dims = json::object();
    if (op.dims.m) dims["M"] = op.dims.m;
    if (op.dims.n) dims["N"] = op.dims.n;
    if (op.dims.k) dims["K"] = op.dims.k;
    json o = {{"id", op.id}, {"kind", to_string(op.kind)}, {"dims", dims},
              {"dtype", to_string(op.dtype)}, {"inputs", op.inputs}, {"outputs", op.outputs}};
    if (op.weight) o["weight"] = *op.weight;
    doc["operators"].push_back(o);
  }
  return doc.dump(2);
}

void TileConfig::validate() const {
  if (block_m == 0 || block_n == 0 || block_k == 0 || k_split == 0)
    fail(ErrorKind::ConfigError, "tile dims and k_split must be positive");
  if (block_m % kMmaM || block_n % kMmaN || block_k % kMmaK)
    fail(ErrorKind::ConfigError, "block dims must be multiples of the 16x8x16 MMA tile");
  if (block_k % k_split) fail(ErrorKind::ConfigError, "k_split must divide block_k");
}

WeightBytes weight_bytes(std::uint64_t n, std::uint64_t k, DType dtype) {
  if (dtype == DType::Fp16) return {n * k * 2, 0};
  return {n * k / 2, n * ceil_div(k, kScaleGroup) * 2};
}

WeightBytes weight_bytes(const Operator& op) {
  if (!op.weight) fail(ErrorKind::ValidationError, "operator '" + op.id + "' has no weights");
  return weight_bytes(op.dims.n, op.dims.k, op.dtype);
}

WeightBytes weight_tile_bytes(const TileConfig& tiles, DType dtype) {
  return weight_bytes(tiles.block_n, tiles.sub_k(), dtype);
}

void lower_operator(const OperatorGraph& graph, std::size_t op_index, const TileConfig& tiles,
                    std::uint64_t page_size, MicroOpTrace& trace) {
  tiles.validate();
  const auto& op = graph.operators.at(op_index);
  Emitter e{trace, page_size, static_cast<std::uint32_t>(op_index)};
  if (is_gemm_like(op.kind)) {
    lower_gemm(graph, op, tiles, e);
    return;
  }
  switch (op.kind) {
    case OperatorKind::RmsNorm:
    case OperatorKind::Softmax:
    case OperatorKind::Swiglu:
    case OperatorKind::ResidualAdd:
      lower_elementwise(graph, op, tiles, e);
      return;
    default:
      fail(ErrorKind::ValidationError, "unsupported operator kind");
  }
}

MicroOpTrace lower_operator(const OperatorGraph& graph, std::size_t op_index,
                            const TileConfig& tiles, std::uint64_t page_size) {
  MicroOpTrace trace;
  lower_operator(graph, op_index, tiles, page_size, trace);
  return trace;
}

MicroOpTrace lower_graph(const OperatorGraph& graph, const TileConfig& tiles,
                         std::uint64_t page_size) {
  MicroOpTrace trace;
  for (std::size_t i = 0; i < graph.operators.size(); ++i)
    lower_operator(graph, i, tiles, page_size, trace);
  return trace;
}

}  // namespace mkplan
