#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mkplan/hwmodel.hpp"
#include "mkplan/plan.hpp"

namespace mkplan {

// Why the Consumer role was not doing productive work during a cycle.
enum class StallReason : std::uint8_t {
  PageWait,      // next op waited on a prefetch or a page release
  DepWait,       // next op waited on a non-load producer
  IssueWait,     // in-order issue, lane or issue-width limits
  BankConflict,  // shared-memory replay cycles
  Drain,         // after the last consumer op, until the kernel ends
};
inline constexpr std::size_t kNumStallReasons = 5;
std::string_view to_string(StallReason reason);

struct OpTiming {
  std::uint64_t start = 0;
  std::uint64_t release = 0;   // role lane free again
  std::uint64_t complete = 0;  // result visible to dependents
  friend bool operator==(const OpTiming&, const OpTiming&) = default;
};

enum class PageState : std::uint8_t { Empty, Locked, Ready };
std::string_view to_string(PageState state);

struct PageEvent {
  std::uint64_t time = 0;
  std::uint32_t page = 0;
  PageState state = PageState::Empty;  // state entered
  OpId op = kNoOp;
  std::size_t assignment = 0;
};

enum class EventPhase : std::uint8_t { Start, Complete };

struct SimEvent {
  std::uint64_t time = 0;
  Role role = Role::Launcher;
  OpId op = 0;
  EventPhase phase = EventPhase::Start;
  friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

struct SimReport {
  std::uint64_t makespan = 0;
  std::array<std::uint64_t, kNumRoles> busy{};     // union of occupied cycles per role
  std::uint64_t consumer_productive = 0;
  std::array<std::uint64_t, kNumStallReasons> stalls{};
  std::vector<OpTiming> timing;                    // per op
  std::vector<std::uint32_t> conflict;             // per op bank-conflict factor
  std::vector<PageEvent> page_events;              // sorted by (time, page)
  std::vector<SimEvent> events;                    // sorted by (time, role, op, phase)

  double duty_cycle() const {
    return makespan == 0 ? 0.0 : static_cast<double>(consumer_productive) / static_cast<double>(makespan);
  }
  double idle_fraction(Role role) const {
    return makespan == 0 ? 0.0
                         : 1.0 - static_cast<double>(busy[static_cast<std::size_t>(role)]) /
                                     static_cast<double>(makespan);
  }
};

/// Relative duty-cycle drop from `a` to `b`: (a - b) / a. ValidationError
/// when `a` has a zero duty cycle.
double duty_cycle_loss(double a, double b);
double duty_cycle_loss(const SimReport& a, const SimReport& b);

/// Consumer idle cycles by cause; the values sum to makespan minus the
/// Consumer's productive cycles.
std::map<StallReason, std::uint64_t> stall_breakdown(const SimReport& report);

/// Bank-conflict factor of every op under the candidate's swizzle.
std::vector<std::uint32_t> conflict_factors(const PlanCandidate& candidate,
                                            const HardwareSpec& spec);

/// Discrete-event simulation: each role issues its ops in order onto
/// `lanes` parallel slots, an op starts once its producers completed, its
/// page waits were released and a slot is free. Prefetch and writeback ops
/// hold their slot for one cycle and complete after their latency.
/// Throws InternalDeadlock if no role can make progress, ValidationError on
/// an empty trace.
SimReport simulate(const PlanCandidate& candidate, const HardwareSpec& spec);

/// Chrome trace-event JSON (one complete event per op, one track per role).
std::string chrome_trace(const PlanCandidate& candidate, const SimReport& report);

}  // namespace mkplan
