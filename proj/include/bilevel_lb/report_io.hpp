#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilevel_lb/instance.hpp"
#include "bilevel_lb/oracles.hpp"

namespace bilevel_lb {

nlohmann::json to_json(const FunctionClassParams& fc);
nlohmann::json to_json(const DerivedInstanceParams& params);
nlohmann::json to_json(const ActivationEvent& event);

// One JSON object per line, in event order, each tagged with the run seed.
std::string activation_jsonl(const std::vector<ActivationEvent>& events, std::uint64_t seed);

// Writes content to a sibling temporary file and renames it over path.
// Throws std::runtime_error on I/O failure.
void write_file_atomic(const std::string& path, const std::string& content);

// Stable rendering: two-space indent, trailing newline.
std::string dump(const nlohmann::json& j);

}  // namespace bilevel_lb
