#pragma once

#include <string>
#include <string_view>

#include "mkplan/hwmodel.hpp"
#include "mkplan/plan.hpp"
#include "mkplan/simulator.hpp"

namespace mkplan {

// Missing optional fields keep their defaults; unknown fields are a ParseError.
HardwareSpec load_hw(std::string_view json_text);
HardwareSpec load_hw_file(const std::string& path);
std::string dump_hw(const HardwareSpec& spec);

SearchSpace load_space(std::string_view json_text);
SearchSpace load_space_file(const std::string& path);
std::string dump_space(const SearchSpace& space);

PlanKnobs load_knobs(std::string_view json_text);
PlanKnobs load_knobs_file(const std::string& path);
std::string dump_knobs(const PlanKnobs& knobs);

std::string dump_trace_listing(const MicroOpTrace& trace);
std::string dump_report(const PlanCandidate& candidate, const SimReport& report);

std::string read_file(const std::string& path);  // MissingInput if unreadable
void write_file(const std::string& path, std::string_view text);

}  // namespace mkplan
