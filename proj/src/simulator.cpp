#include "mkplan/simulator.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "mkplan/error.hpp"

namespace mkplan {

double duty_cycle_loss(double a, double b) {
  if (a == 0.0) fail(ErrorKind::ValidationError, "duty cycle loss is undefined for a zero reference duty cycle");
  return (a - b) / a;
}

double duty_cycle_loss(const SimReport& a, const SimReport& b) {
  return duty_cycle_loss(a.duty_cycle(), b.duty_cycle());
}

std::map<StallReason, std::uint64_t> stall_breakdown(const SimReport& report) {
  std::map<StallReason, std::uint64_t> out;
  for (std::size_t i = 0; i < kNumStallReasons; ++i) out[static_cast<StallReason>(i)] = report.stalls[i];
  return out;
}

std::string_view to_string(StallReason reason) {
  switch (reason) {
    case StallReason::PageWait: return "PageWait";
    case StallReason::DepWait: return "DepWait";
    case StallReason::IssueWait: return "IssueWait";
    case StallReason::BankConflict: return "BankConflict";
    case StallReason::Drain: return "Drain";
  }
  return "?";
}

std::string_view to_string(PageState state) {
  switch (state) {
    case PageState::Empty: return "Empty";
    case PageState::Locked: return "Locked";
    case PageState::Ready: return "Ready";
  }
  return "?";
}

std::vector<std::uint32_t> conflict_factors(const PlanCandidate& c, const HardwareSpec& spec) {
  const auto& ops = c.trace().ops;
  std::vector<std::uint32_t> out(ops.size(), 1);
  std::map<std::uint32_t, std::uint32_t> by_pitch;
  for (const auto& op : ops) {
    if (!is_shared_memory_access(op.kind) || op.smem_pitch == 0) continue;
    auto it = by_pitch.find(op.smem_pitch);
    if (it == by_pitch.end()) {
      // One ldmatrix phase: 8 lanes, each fetching a 16-byte row.
      const AccessPattern p{16, std::max<std::uint32_t>(1, op.smem_pitch / 16), 8, c.knobs.swizzle};
      it = by_pitch.emplace(op.smem_pitch, bank_conflict_factor(p, spec)).first;
    }
    out[op.id] = it->second;
  }
  return out;
}

namespace {

bool is_async(MicroOpKind kind) {
  return kind == MicroOpKind::GlobalToShared || kind == MicroOpKind::RegToGlobal;
}

struct RoleState {
  std::size_t head = 0;
  std::vector<std::uint64_t> lane_free;
  std::uint64_t last_start = 0;
  std::uint32_t issued_at_last = 0;
};

}  // namespace

SimReport simulate(const PlanCandidate& c, const HardwareSpec& spec) {
  const auto& trace = c.trace();
  const auto& graph = c.graph();
  const std::size_t n = trace.ops.size();
  if (n == 0) fail(ErrorKind::ValidationError, "cannot simulate an empty trace");

  SimReport r;
  r.conflict = conflict_factors(c, spec);
  r.timing.resize(n);
  const auto waits = c.op_waits();
  std::vector<bool> done(n, false);
  std::vector<StallReason> binding(n, StallReason::IssueWait);

  std::array<RoleState, kNumRoles> roles;
  for (Role role : kAllRoles)
    roles[static_cast<std::size_t>(role)].lane_free.assign(c.knobs.warps.lanes(role), 0);

  std::size_t remaining = n;
  while (remaining > 0) {
    bool progress = false;
    for (std::size_t ri = 0; ri < kNumRoles; ++ri) {
      auto& rs = roles[ri];
      const auto& order = c.role_orders[ri];
      while (rs.head < order.size()) {
        const OpId v = order[rs.head];
        const auto preds = graph.preds(v);
        const bool ready = std::all_of(preds.begin(), preds.end(), [&](OpId p) { return done[p]; }) &&
                           std::all_of(waits[v].begin(), waits[v].end(),
                                       [&](OpId w) { return w == v || done[w]; });
        if (!ready) break;

        std::uint64_t page_t = 0, dep_t = 0;
        for (OpId p : preds) {
          auto& t = trace.ops[p].kind == MicroOpKind::GlobalToShared ? page_t : dep_t;
          t = std::max(t, r.timing[p].complete);
        }
        for (OpId w : waits[v])
          if (w != v) page_t = std::max(page_t, r.timing[w].complete);

        auto lane = std::min_element(rs.lane_free.begin(), rs.lane_free.end());
        std::uint64_t issue_t = std::max(rs.last_start, *lane);
        std::uint64_t start = std::max({issue_t, page_t, dep_t});
        if (start == rs.last_start && rs.issued_at_last >= spec.issue_width) ++start;

        if (start > std::max(page_t, dep_t))
          binding[v] = StallReason::IssueWait;
        else
          binding[v] = page_t >= dep_t ? StallReason::PageWait : StallReason::DepWait;

        const auto& op = trace.ops[v];
        const std::uint64_t cost = micro_op_cost(op.kind, spec, r.conflict[v]);
        const std::uint64_t hold = is_async(op.kind) ? 1 : cost;
        r.timing[v] = OpTiming{start, start + hold, start + cost};
        *lane = start + hold;
        if (start == rs.last_start && rs.head > 0) {
          ++rs.issued_at_last;
        } else {
          rs.last_start = start;
          rs.issued_at_last = 1;
        }
        done[v] = true;
        --remaining;
        ++rs.head;
        progress = true;
      }
    }
    if (!progress) {
      std::string heads;
      for (std::size_t ri = 0; ri < kNumRoles; ++ri) {
        const auto& order = c.role_orders[ri];
        if (roles[ri].head < order.size())
          heads += " " + std::string(to_string(kAllRoles[ri])) + ":" + std::to_string(order[roles[ri].head]);
      }
      fail(ErrorKind::InternalDeadlock, "simulation deadlocked with " + std::to_string(remaining) +
                                            " ops left; blocked heads" + heads);
    }
  }

  for (const auto& t : r.timing) r.makespan = std::max(r.makespan, t.complete);

  // Busy unions per role; ops of a role start in non-decreasing order.
  for (std::size_t ri = 0; ri < kNumRoles; ++ri) {
    std::uint64_t covered = 0, busy = 0;
    for (OpId v : c.role_orders[ri]) {
      const auto& t = r.timing[v];
      const std::uint64_t lo = std::max(covered, t.start);
      if (t.release > lo) busy += t.release - lo;
      covered = std::max(covered, t.release);
    }
    r.busy[ri] = busy;
  }

  // Consumer breakdown: productive, replay, idle gaps by binding constraint, drain.
  {
    const auto& order = c.role_orders[static_cast<std::size_t>(Role::Consumer)];
    std::uint64_t covered = 0, productive_cover = 0;
    for (OpId v : order) {
      const auto& t = r.timing[v];
      if (t.start > covered)
        r.stalls[static_cast<std::size_t>(binding[v])] += t.start - covered;
      const std::uint64_t base_end = t.start + spec.latency_of(trace.ops[v].kind);
      const std::uint64_t lo = std::max(productive_cover, t.start);
      if (base_end > lo) r.consumer_productive += base_end - lo;
      productive_cover = std::max(productive_cover, base_end);
      covered = std::max(covered, t.release);
    }
    const std::uint64_t occupied = r.busy[static_cast<std::size_t>(Role::Consumer)];
    r.stalls[static_cast<std::size_t>(StallReason::BankConflict)] = occupied - r.consumer_productive;
    r.stalls[static_cast<std::size_t>(StallReason::Drain)] = r.makespan - covered;
  }

  // Page lifecycle events.
  const auto& as = c.pages.assignments;
  for (std::size_t i = 0; i < as.size(); ++i) {
    const auto& a = as[i];
    if (a.fillers.empty()) {
      for (auto p : a.pages) r.page_events.push_back({0, p, PageState::Ready, kNoOp, i});
      continue;
    }
    std::uint64_t locked = UINT64_MAX, ready = 0;
    for (OpId f : a.fillers) {
      locked = std::min(locked, r.timing[f].start);
      ready = std::max(ready, r.timing[f].complete);
    }
    for (auto p : a.pages) {
      r.page_events.push_back({locked, p, PageState::Locked, a.fillers.front(), i});
      r.page_events.push_back({ready, p, PageState::Ready, a.fillers.back(), i});
    }
    if (a.release == kNoOp) continue;
    std::uint64_t freed = r.timing[a.release].complete;
    for (OpId u : a.users) freed = std::max(freed, r.timing[u].complete);
    freed = std::max(freed, ready);
    for (auto p : a.pages) r.page_events.push_back({freed, p, PageState::Empty, a.release, i});
  }
  std::stable_sort(r.page_events.begin(), r.page_events.end(), [](const PageEvent& a, const PageEvent& b) {
    return std::tie(a.time, a.page, a.assignment) < std::tie(b.time, b.page, b.assignment);
  });

  r.events.reserve(2 * n);
  for (std::size_t v = 0; v < n; ++v) {
    const Role role = c.role_of[v];
    r.events.push_back({r.timing[v].start, role, static_cast<OpId>(v), EventPhase::Start});
    r.events.push_back({r.timing[v].complete, role, static_cast<OpId>(v), EventPhase::Complete});
  }
  std::sort(r.events.begin(), r.events.end(), [](const SimEvent& a, const SimEvent& b) {
    return std::tie(a.time, a.role, a.op, a.phase) < std::tie(b.time, b.role, b.op, b.phase);
  });
  return r;
}

std::string chrome_trace(const PlanCandidate& c, const SimReport& report) {
  using nlohmann::json;
  json events = json::array();
  for (Role role : kAllRoles) {
    events.push_back({{"name", "thread_name"},
                      {"ph", "M"},
                      {"pid", 0},
                      {"tid", static_cast<int>(role)},
                      {"args", {{"name", std::string(to_string(role))}}}});
  }
  const auto& ops = c.trace().ops;
  for (std::size_t v = 0; v < ops.size(); ++v) {
    const auto& t = report.timing[v];
    events.push_back({{"name", std::string(to_string(ops[v].kind))},
                      {"cat", std::string(to_string(c.role_of[v]))},
                      {"ph", "X"},
                      {"pid", 0},
                      {"tid", static_cast<int>(c.role_of[v])},
                      {"ts", t.start},
                      {"dur", std::max<std::uint64_t>(1, t.complete - t.start)},
                      {"args", {{"op", v}, {"operator", ops[v].source_operator}}}});
  }
  return json{{"traceEvents", events}, {"displayTimeUnit", "ns"}}.dump(1);
}

}  // namespace mkplan
