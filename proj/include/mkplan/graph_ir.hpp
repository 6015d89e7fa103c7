#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mkplan/micro_op.hpp"

namespace mkplan {

enum class OperatorKind : std::uint8_t {
  RmsNorm,
  Gemm,
  AttentionQK,
  Softmax,
  AttentionPV,
  Swiglu,
  ResidualAdd,
  LmHead,
};

enum class DType : std::uint8_t { Fp16, Int4W4A16 };

std::string_view to_string(OperatorKind kind);
std::optional<OperatorKind> parse_operator_kind(std::string_view name);
std::string_view to_string(DType dtype);
std::optional<DType> parse_dtype(std::string_view name);

// Gemm-shaped operators stream a weight operand through shared memory.
bool is_gemm_like(OperatorKind kind);

struct Dims {
  std::uint64_t m = 0;
  std::uint64_t n = 0;
  std::uint64_t k = 0;
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct Operator {
  std::string id;
  OperatorKind kind = OperatorKind::Gemm;
  Dims dims;
  DType dtype = DType::Fp16;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::string> weight;
  friend bool operator==(const Operator&, const Operator&) = default;
};

struct GraphBuffer {
  std::string id;
  Space space = Space::Global;
  std::uint64_t bytes = 0;
  friend bool operator==(const GraphBuffer&, const GraphBuffer&) = default;
};

struct OperatorGraph {
  std::vector<GraphBuffer> buffers;  // declared buffers (graph inputs and optional intermediates)
  std::vector<Operator> operators;   // program order

  const GraphBuffer* find_buffer(std::string_view id) const;
  // Throws ValidationError on dangling references, bad dims or duplicate ids.
  void validate() const;
  friend bool operator==(const OperatorGraph&, const OperatorGraph&) = default;
};

OperatorGraph load_graph(std::string_view json_text);
OperatorGraph load_graph_file(const std::string& path);
std::string dump_graph(const OperatorGraph& graph);

inline constexpr std::uint32_t kMmaM = 16;
inline constexpr std::uint32_t kMmaN = 8;
inline constexpr std::uint32_t kMmaK = 16;
inline constexpr std::uint32_t kScaleGroup = 128;

struct TileConfig {
  std::uint32_t block_m = 16;
  std::uint32_t block_n = 64;
  std::uint32_t block_k = 64;
  std::uint32_t k_split = 1;

  std::uint32_t sub_k() const { return block_k / k_split; }
  void validate() const;
  friend bool operator==(const TileConfig&, const TileConfig&) = default;
  friend auto operator<=>(const TileConfig&, const TileConfig&) = default;
};

struct WeightBytes {
  std::uint64_t weight = 0;
  std::uint64_t scale = 0;
  std::uint64_t total() const { return weight + scale; }
};

/// Resident bytes of an operator's weight operand (N x K). INT4 packs two
/// elements per byte and carries one fp16 scale per 128-element group.
WeightBytes weight_bytes(const Operator& op);
WeightBytes weight_bytes(std::uint64_t n, std::uint64_t k, DType dtype);

/// Bytes of one weight sub-tile staged per pipeline iteration.
WeightBytes weight_tile_bytes(const TileConfig& tiles, DType dtype);

/// Appends the micro-op sequence for one operator. Shared-page intervals are
/// chunked so none exceeds page_size.
void lower_operator(const OperatorGraph& graph, std::size_t op_index,
                    const TileConfig& tiles, std::uint64_t page_size,
                    MicroOpTrace& trace);

MicroOpTrace lower_operator(const OperatorGraph& graph, std::size_t op_index,
                            const TileConfig& tiles, std::uint64_t page_size);

MicroOpTrace lower_graph(const OperatorGraph& graph, const TileConfig& tiles,
                         std::uint64_t page_size);

}  // namespace mkplan
