#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mkplan/depgraph.hpp"
#include "mkplan/graph_ir.hpp"
#include "mkplan/hwmodel.hpp"
#include "mkplan/micro_op.hpp"

namespace mkplan {

inline constexpr OpId kNoOp = std::numeric_limits<OpId>::max();

enum class Role : std::uint8_t { Launcher, Loader, Consumer, Storer };
inline constexpr std::size_t kNumRoles = 4;
inline constexpr std::array<Role, kNumRoles> kAllRoles = {Role::Launcher, Role::Loader,
                                                          Role::Consumer, Role::Storer};

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view name);

struct WarpAllocation {
  std::uint32_t launcher = 1;
  std::uint32_t loader = 4;
  std::uint32_t consumer = 16;
  std::uint32_t storer = 4;

  std::uint32_t of(Role role) const;
  std::uint32_t total() const { return launcher + loader + consumer + storer; }
  // Ops a role keeps in flight at once: one per four-warp group.
  std::uint32_t lanes(Role role) const { return std::max<std::uint32_t>(1, of(role) / 4); }
  friend bool operator==(const WarpAllocation&, const WarpAllocation&) = default;
  friend auto operator<=>(const WarpAllocation&, const WarpAllocation&) = default;
};

struct PlanFlags {
  bool reuse_act_weight = false;
  bool reuse_act_output = false;
  bool split_reduction = false;
  // Set on variants produced by the post-simulation passes.
  bool gap_fill = false;
  bool role_rebalance = false;
  friend bool operator==(const PlanFlags&, const PlanFlags&) = default;
  friend auto operator<=>(const PlanFlags&, const PlanFlags&) = default;
};

// One point of the search space, before anything is materialized.
struct PlanKnobs {
  TileConfig tile;
  WarpAllocation warps;
  std::uint32_t n_stage = 2;
  std::uint32_t prefetch_stride = 1;
  std::uint32_t swizzle = 0;
  PlanFlags flags;

  // Canonical text form; lexicographic order on it breaks score ties.
  std::string encoding() const;
  friend bool operator==(const PlanKnobs&, const PlanKnobs&) = default;
};

enum class PagePool : std::uint8_t { Stream, Resident, Activation };
std::string_view to_string(PagePool pool);

// One occupant of a set of physical pages: filled by `fillers`, read or
// updated by `users`, and freed once `release` and every user completed.
struct PageAssignment {
  PagePool pool = PagePool::Stream;
  std::vector<BufferInterval> intervals;
  std::vector<std::uint32_t> pages;
  std::vector<OpId> fillers;  // empty: resident from launch
  std::vector<OpId> users;
  OpId release = kNoOp;       // kNoOp: held until the kernel ends
  std::vector<OpId> wait;     // must complete before any filler issues

  OpId acquire() const { return fillers.empty() ? kNoOp : fillers.front(); }
  friend bool operator==(const PageAssignment&, const PageAssignment&) = default;
};

struct PagePlan {
  std::uint32_t n_stage = 0;
  std::uint32_t prefetch_stride = 0;
  std::uint32_t pages_per_stage = 0;
  std::uint32_t resident_pages = 0;
  std::uint32_t act_pages = 0;
  std::vector<PageAssignment> assignments;  // per page, occupants appear in order

  std::uint32_t peak_pages() const {
    return n_stage * pages_per_stage + resident_pages + act_pages;
  }
  friend bool operator==(const PagePlan&, const PagePlan&) = default;
};

struct PagePlanOptions {
  std::uint32_t n_stage = 2;
  std::uint32_t prefetch_stride = 1;
  std::uint64_t page_size = 16384;
  bool reuse_act_weight = false;
  bool reuse_act_output = false;
};

/// Fill number of every prefetch op, -1 for other ops. Consecutive
/// prefetches of the same operator tile iteration share one fill.
std::vector<std::int64_t> fill_index(const MicroOpTrace& trace);

/// Static page assignment. Streamed tiles rotate through n_stage slots;
/// never-written shared buffers stay resident; activations are placed by a
/// linear scan in program order. Fill f additionally waits for fill
/// f - (stride + 1) to be released.
PagePlan plan_pages(const MicroOpTrace& trace, const PagePlanOptions& options);

// Lowered trace plus its dependency graph; shared between candidates.
struct Lowered {
  MicroOpTrace trace;
  DepGraph graph;
};

std::shared_ptr<const Lowered> lower_for(const OperatorGraph& graph, const TileConfig& tile,
                                         bool split, std::uint64_t page_size);

Role default_role(MicroOpKind kind);
// Role of every op by kind; empty for an empty trace.
std::vector<Role> default_role_map(const MicroOpTrace& trace);

struct PlanCandidate {
  PlanKnobs knobs;
  std::shared_ptr<const Lowered> lowered;
  std::vector<Role> role_of;                               // per op
  std::array<std::vector<OpId>, kNumRoles> role_orders;    // issue order per role
  PagePlan pages;

  const MicroOpTrace& trace() const { return lowered->trace; }
  const DepGraph& graph() const { return lowered->graph; }
  // Union of the wait lists of every assignment the op fills.
  std::vector<std::vector<OpId>> op_waits() const;
};

/// Default role map, program-order issue per role and a fresh page plan.
PlanCandidate materialize(const PlanKnobs& knobs, std::shared_ptr<const Lowered> lowered,
                          const HardwareSpec& spec);

struct SearchSpace {
  std::vector<std::uint32_t> block_m{16};
  std::vector<std::uint32_t> block_n{64, 128};
  std::vector<std::uint32_t> block_k{64, 128};
  std::vector<std::uint32_t> k_split{1, 2};
  std::vector<std::uint32_t> consumer_warps{4, 8, 16};
  std::vector<std::uint32_t> loader_warps{4};
  std::vector<std::uint32_t> storer_warps{4};
  std::vector<std::uint32_t> n_stage{1, 2, 3, 4};
  std::vector<std::uint32_t> prefetch_stride{1, 2, 3};
  std::vector<std::uint32_t> swizzle{0, 7};
  std::vector<bool> reuse_act_weight{false, true};
  std::vector<bool> reuse_act_output{false, true};
  std::vector<bool> split_reduction{false, true};
  bool gap_fill = true;
  bool role_rebalance = true;

  std::size_t size() const;
  // Mixed-radix decode; the last field varies fastest.
  PlanKnobs at(std::size_t index) const;
  void validate() const;
  friend bool operator==(const SearchSpace&, const SearchSpace&) = default;
};

enum class PruneReason : std::uint8_t { SmemExceeded, StageInfeasible, WarpExceeded, TileInvalid };
std::string_view to_string(PruneReason reason);

/// First violated resource limit, or nullopt when the candidate fits.
std::optional<PruneReason> resource_filter(const PlanCandidate& candidate,
                                           const HardwareSpec& spec);

struct Enumerated {
  std::vector<PlanCandidate> kept;
  std::vector<std::pair<PlanKnobs, PruneReason>> pruned;
};

/// Walks the whole space in enumeration order, materializing and filtering
/// every point. Lowerings are shared between candidates with equal tiles.
Enumerated enumerate_candidates(const OperatorGraph& graph, const HardwareSpec& spec,
                                const SearchSpace& space);

enum class ViolationKind : std::uint8_t {
  IllegalTransition,
  WarViolation,
  RoleOrderViolation,
  RoleCoverage,
  StrideExceeded,
  PotentialDeadlock,
};
std::string_view to_string(ViolationKind kind);

struct PlanViolation {
  ViolationKind kind;
  OpId op = kNoOp;
  std::int64_t page = -1;
  std::string message;
};

/// Structural checks: page lifecycle legality, release-before-reacquire,
/// role orders as linear extensions of the DAG, stride within the ring and
/// acyclicity of dependencies, issue orders and page waits combined.
std::vector<PlanViolation> validate_plan(const PlanCandidate& candidate);

}  // namespace mkplan
