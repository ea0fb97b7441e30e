#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bilevel_lb/instance.hpp"
#include "bilevel_lb/rng.hpp"

namespace bilevel_lb {

// Raised when a query point or proposed iterate leaves the span of
// previously revealed coordinates.
class ZeroRespectingViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a stochastic query is made at a point the support state does
// not cover.
class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variable { x, y };
enum class Trigger { g_oracle, f_oracle, algorithm_span };

const char* to_string(Variable v);
const char* to_string(Trigger t);

struct ActivationEvent {
  std::size_t query_index = 0;
  Variable variable = Variable::y;
  std::size_t flat_index = 0;  // 1-based
  Trigger trigger = Trigger::g_oracle;
};

// Activation bitsets over x (1..T) and the flattened y (1..n(T+1)).
// Bits are only ever set.
class SupportState {
 public:
  explicit SupportState(const DerivedInstanceParams& params);

  // Support state whose active sets are exactly supp(pt).
  static SupportState from_point(const DerivedInstanceParams& params, const BilevelPoint& pt);

  std::size_t n() const { return n_; }
  bool x_active(std::size_t index0) const { return x_active_[index0]; }
  bool y_active(std::size_t index0) const { return y_active_[index0]; }
  std::size_t x_active_count() const { return x_count_; }
  std::size_t y_active_count() const { return y_count_; }
  // Largest active 1-based index, 0 when none.
  std::size_t x_max_active() const { return x_max_; }
  std::size_t y_max_active() const { return y_max_; }

  // Return true when the bit was newly set.
  bool activate_x(std::size_t index0);
  bool activate_y(std::size_t index0);

  // Next chain coordinate to activate: the smallest inactive 1-based flat
  // y index above n, or nullopt once every y coordinate beyond block 0 is
  // active.
  std::optional<std::size_t> frontier() const;

  // Description of the first coordinate of pt outside the active sets.
  std::optional<std::string> first_violation(const BilevelPoint& pt) const;
  bool covers(const BilevelPoint& pt) const { return !first_violation(pt).has_value(); }

 private:
  std::size_t n_;
  std::vector<bool> x_active_;
  std::vector<bool> y_active_;
  std::size_t x_count_ = 0;
  std::size_t y_count_ = 0;
  std::size_t x_max_ = 0;
  std::size_t y_max_ = 0;
  mutable std::size_t cursor_;  // every y index below cursor_ (beyond block 0) is active
};

// Which coordinate a stochastic reply rescaled, and how.
struct Perturbation {
  Variable variable = Variable::y;
  std::size_t index0 = 0;
  double true_value = 0.0;
  bool xi = true;
};

struct OracleReply {
  double f_val = 0.0;
  double g_val = 0.0;
  std::vector<double> gf_x;
  std::vector<double> gf_y;
  std::vector<double> gg_x;
  std::vector<double> gg_y;
  std::optional<Perturbation> perturbation;
};

OracleReply deterministic_query(const DerivedInstanceParams& params, const BilevelPoint& pt);

// Draws xi ~ Bernoulli(p) and rescales one coordinate of the g gradient by
// xi / p: coordinate i* of grad_y g when i* mod n != 1, otherwise grad_x g at
// j = (i* - 1) / n. Gradients of f are never perturbed. With no frontier the
// reply is exact. Throws ProtocolViolation if supp(pt) is not covered by
// support.
OracleReply stochastic_query(const DerivedInstanceParams& params, const BilevelPoint& pt,
                             const SupportState& support, SplitRng& rng);

// Perturbation target for the given frontier state, or nullopt when the
// reply is exact.
std::optional<Perturbation> perturbation_target(const DerivedInstanceParams& params,
                                                const SupportState& support,
                                                const OracleReply& exact);

// perturbation_target with xi drawn from rng; the stochastic oracle's only
// source of randomness.
std::optional<Perturbation> draw_perturbation(const DerivedInstanceParams& params, const SupportState& support,
                                              const OracleReply& exact, SplitRng& rng);

// xi * true_value / p.
double realized_value(const DerivedInstanceParams& params, const Perturbation& pert);

// Describes the first breach of the chain subspace relations by the support
// state after t queries (t = K n + k, 1 <= k <= n): nothing beyond flat
// index (K + 1) n + k in y and nothing beyond x_K.
std::optional<std::string> subspace_violation(const DerivedInstanceParams& params,
                                              const SupportState& support, std::size_t t);

// Absorbs the supports of reply's gradients into support, then checks the
// proposed next iterate. When enforce is true a proposed point outside the
// span raises ZeroRespectingViolation; otherwise its new coordinates are
// activated with the algorithm_span trigger. Returns the newly activated
// coordinates.
std::vector<ActivationEvent> span_update(SupportState& support, const OracleReply& reply,
                                         const BilevelPoint& proposed, std::size_t query_index,
                                         bool enforce = true);

// Absorb-only half of span_update.
std::vector<ActivationEvent> absorb_reply(SupportState& support, const OracleReply& reply,
                                          std::size_t query_index);

struct VarianceEstimate {
  double variance = 0.0;  // unbiased estimate of E |G - mean|^2
  double stderr_ = 0.0;   // Monte Carlo standard error of the estimate
  std::size_t samples = 0;
};

// Requires samples >= 1e4. The overload without a support state uses the
// support of pt itself.
VarianceEstimate variance_estimate(const DerivedInstanceParams& params, const BilevelPoint& pt,
                                   const SupportState& support, std::size_t samples, SplitRng& rng);
VarianceEstimate variance_estimate(const DerivedInstanceParams& params, const BilevelPoint& pt,
                                   std::size_t samples, SplitRng& rng);

// Query loop for one algorithm run. Owns the support state and the activation
// log; each query checks the point against the current span before serving.
class OracleSession {
 public:
  OracleSession(const DerivedInstanceParams& params, std::uint64_t seed, bool enforce = true);

  const OracleReply& query(const BilevelPoint& pt);

  // Proposes a point without querying it (records or rejects span exits).
  void propose(const BilevelPoint& pt);

  std::size_t calls() const { return calls_; }
  const SupportState& support() const { return support_; }
  const std::vector<ActivationEvent>& events() const { return events_; }
  const DerivedInstanceParams& params() const { return *params_; }
  std::uint64_t seed() const { return seed_; }
  bool enforcing() const { return enforce_; }
  const OracleReply& last_reply() const { return last_; }

 private:
  const DerivedInstanceParams* params_;
  std::uint64_t seed_;
  bool enforce_;
  SplitRng rng_;
  SupportState support_;
  std::vector<ActivationEvent> events_;
  std::size_t calls_ = 0;
  OracleReply last_;
};

}  // namespace bilevel_lb
