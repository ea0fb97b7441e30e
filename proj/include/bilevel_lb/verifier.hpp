#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bilevel_lb/bench.hpp"
#include "bilevel_lb/instance.hpp"

namespace bilevel_lb {

inline constexpr const char* kSuiteVersion = "1.0.0";

enum class CheckStatus { pass, fail, skipped };
const char* to_string(CheckStatus s);

struct CheckResult {
  std::string check_id;
  std::string digest;  // params_digest of the instance checked
  CheckStatus status = CheckStatus::fail;
  double margin = 0.0;  // signed slack; > 0 exactly when the check passes
  std::string details;
};

// Every check of the suite on already derived (possibly tampered) parameters,
// or only those whose id starts with one of the prefixes in only.
// Results are sorted by check_id. Exceptions inside a check become fail
// results.
std::vector<CheckResult> run_checks(const DerivedInstanceParams& params, std::uint64_t seed,
                                    const std::vector<std::string>& only = {});

// derive_params + run_checks. A derivation error yields a single failed
// "00.derive" result.
std::vector<CheckResult> run_suite(const FunctionClassParams& fc, Mode mode, std::uint64_t seed);

bool all_pass(const std::vector<CheckResult>& results);

// {suite_version, fc, derived, results}. derived is null when derivation
// failed.
std::string suite_report_json(const FunctionClassParams& fc, Mode mode, const std::vector<CheckResult>& results);

struct ActivationDelay {
  std::size_t flat_index = 0;   // chain coordinate (1-based, > n)
  std::size_t query_index = 0;  // query that revealed it
  std::size_t delay = 0;        // queries since the previous chain activation
};

struct ChainTrace {
  RunTrace trace;
  // First breach of the subspace relations or of the one-coordinate-per-query
  // rule, as "step t: ...".
  std::optional<std::string> violation;
  std::optional<std::size_t> x1_active_at;   // query that revealed x_1
  std::optional<std::size_t> xT_active_at;   // query that revealed x_T
  std::optional<std::size_t> y_2n_active_at; // query that revealed flat index 2n
  std::vector<ActivationDelay> delays;
};

// Runs the greedy prober for up to budget queries and checks the chain
// relations after every query. Throws std::invalid_argument when budget is 0.
ChainTrace chain_trace(const DerivedInstanceParams& params, std::uint64_t seed, std::size_t budget);
ChainTrace chain_trace(const FunctionClassParams& fc, Mode mode, std::uint64_t seed, std::size_t budget);

}  // namespace bilevel_lb
