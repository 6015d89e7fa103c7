#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mkplan {

// PTX-granularity modeled instruction kinds, one per row of the
// high-level -> low-level primitive mapping (plus the cross-block Reduce).
enum class MicroOpKind : std::uint8_t {
  GlobalToShared,   // async prefetch
  LoadSharedToReg,  // warp-level load
  Dequant,          // INT4 -> FP16
  MmaTile,          // 16x8x16 tensor-core tile group
  Epilogue,         // bias / activation fusion
  Reduce,           // cross-block / cross-path reduction
  RegToGlobal,      // async writeback
};

inline constexpr std::size_t kNumKinds = 7;

inline constexpr std::array<MicroOpKind, kNumKinds> kAllKinds = {
    MicroOpKind::GlobalToShared, MicroOpKind::LoadSharedToReg,
    MicroOpKind::Dequant,        MicroOpKind::MmaTile,
    MicroOpKind::Epilogue,       MicroOpKind::Reduce,
    MicroOpKind::RegToGlobal};

std::string_view to_string(MicroOpKind kind);
std::optional<MicroOpKind> parse_kind(std::string_view name);

enum class Space : std::uint8_t { Global, SharedPage, Register };

std::string_view to_string(Space space);
std::optional<Space> parse_space(std::string_view name);

using BufferId = std::uint32_t;
using OpId = std::uint32_t;

struct BufferInterval {
  BufferId buffer = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  Space space = Space::Global;

  std::uint64_t end() const { return offset + length; }
  bool overlaps(const BufferInterval& other) const {
    return buffer == other.buffer && offset < other.end() &&
           other.offset < end();
  }
  friend bool operator==(const BufferInterval&, const BufferInterval&) = default;
};

struct TileCoord {
  std::uint32_t m = 0;
  std::uint32_t n = 0;
  std::uint32_t k = 0;
  friend bool operator==(const TileCoord&, const TileCoord&) = default;
};

struct MicroOp {
  OpId id = 0;
  MicroOpKind kind = MicroOpKind::MmaTile;
  std::vector<BufferInterval> reads;
  std::vector<BufferInterval> writes;
  TileCoord tile;
  std::uint32_t source_operator = 0;
  std::uint32_t smem_pitch = 0;  // row pitch in bytes of the shared tile read, 0 if none

  friend bool operator==(const MicroOp&, const MicroOp&) = default;
};

struct BufferInfo {
  std::string name;
  Space space = Space::Global;
  std::uint64_t bytes = 0;
  friend bool operator==(const BufferInfo&, const BufferInfo&) = default;
};

// Per-operator padding applied during lowering.
struct PaddingRecord {
  std::uint32_t source_operator = 0;
  std::uint64_t m = 0, n = 0, k = 0;         // logical dims
  std::uint64_t m_pad = 0, n_pad = 0, k_pad = 0;  // padded dims
  friend bool operator==(const PaddingRecord&, const PaddingRecord&) = default;
};

// Program-ordered micro-operation sequence plus the buffer table its
// intervals index into. Op ids equal their position.
struct MicroOpTrace {
  std::vector<BufferInfo> buffers;
  std::vector<MicroOp> ops;
  std::vector<PaddingRecord> padding;

  BufferId intern(const std::string& name, Space space, std::uint64_t bytes);
  std::optional<BufferId> find(std::string_view name) const;
  std::size_t size() const { return ops.size(); }
  bool empty() const { return ops.empty(); }
  std::array<std::size_t, kNumKinds> count_by_kind() const;
  void renumber();

  friend bool operator==(const MicroOpTrace&, const MicroOpTrace&) = default;
};

}  // namespace mkplan
