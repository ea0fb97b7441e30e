#include "bilevel_lb/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace bilevel_lb {

const char* to_string(Variable v) { return v == Variable::x ? "x" : "y"; }

const char* to_string(Trigger t) {
  switch (t) {
    case Trigger::g_oracle:
      return "g_oracle";
    case Trigger::f_oracle:
      return "f_oracle";
    case Trigger::algorithm_span:
      return "algorithm_span";
  }
  return "unknown";
}

SupportState::SupportState(const DerivedInstanceParams& params)
    : n_(params.n), x_active_(params.T, false), y_active_(params.y_dim(), false), cursor_(params.n) {}

SupportState SupportState::from_point(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  check_dimensions(params, pt);
  SupportState s(params);
  for (std::size_t i = 0; i < pt.x.size(); ++i) {
    if (pt.x[i] != 0.0) s.activate_x(i);
  }
  for (std::size_t k = 0; k < pt.y.size(); ++k) {
    if (pt.y[k] != 0.0) s.activate_y(k);
  }
  return s;
}

bool SupportState::activate_x(std::size_t index0) {
  if (x_active_.at(index0)) return false;
  x_active_[index0] = true;
  ++x_count_;
  x_max_ = std::max(x_max_, index0 + 1);
  return true;
}

bool SupportState::activate_y(std::size_t index0) {
  if (y_active_.at(index0)) return false;
  y_active_[index0] = true;
  ++y_count_;
  y_max_ = std::max(y_max_, index0 + 1);
  return true;
}

std::optional<std::size_t> SupportState::frontier() const {
  while (cursor_ < y_active_.size() && y_active_[cursor_]) ++cursor_;
  if (cursor_ >= y_active_.size()) return std::nullopt;
  return cursor_ + 1;
}

std::optional<std::string> SupportState::first_violation(const BilevelPoint& pt) const {
  if (pt.x.size() != x_active_.size() || pt.y.size() != y_active_.size()) {
    return std::string("point dimensions do not match support state");
  }
  for (std::size_t k = 0; k < pt.y.size(); ++k) {
    if (pt.y[k] != 0.0 && !y_active_[k]) return "y flat index " + std::to_string(k + 1);
  }
  for (std::size_t i = 0; i < pt.x.size(); ++i) {
    if (pt.x[i] != 0.0 && !x_active_[i]) return "x index " + std::to_string(i + 1);
  }
  return std::nullopt;
}

OracleReply deterministic_query(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  OracleReply r;
  r.f_val = eval_f(params, pt);
  r.g_val = eval_g(params, pt);
  PartialGradients gf = grad_f(params, pt);
  PartialGradients gg = grad_g(params, pt);
  r.gf_x = std::move(gf.x);
  r.gf_y = std::move(gf.y);
  r.gg_x = std::move(gg.x);
  r.gg_y = std::move(gg.y);
  return r;
}

std::optional<Perturbation> perturbation_target(const DerivedInstanceParams& params,
                                                const SupportState& support,
                                                const OracleReply& exact) {
  const auto i_star = support.frontier();
  if (!i_star) return std::nullopt;
  const std::size_t n = params.n;
  Perturbation pert;
  // The block-boundary branch only exists when a block has a coordinate 1
  // distinct from coordinate n, i.e. n >= 2; for n = 1, i* mod n is always 0.
  if (n >= 2 && *i_star % n == 1) {
    const std::size_t j = (*i_star - 1) / n;  // 1..T
    pert.variable = Variable::x;
    pert.index0 = j - 1;
    pert.true_value = exact.gg_x[j - 1];
  } else {
    pert.variable = Variable::y;
    pert.index0 = *i_star - 1;
    pert.true_value = exact.gg_y[*i_star - 1];
  }
  return pert;
}

std::optional<Perturbation> draw_perturbation(const DerivedInstanceParams& params, const SupportState& support,
                                              const OracleReply& exact, SplitRng& rng) {
  auto pert = perturbation_target(params, support, exact);
  if (pert) pert->xi = rng.bernoulli(params.p);
  return pert;
}

double realized_value(const DerivedInstanceParams& params, const Perturbation& pert) {
  return pert.xi ? pert.true_value / params.p : 0.0;
}

OracleReply stochastic_query(const DerivedInstanceParams& params, const BilevelPoint& pt,
                             const SupportState& support, SplitRng& rng) {
  if (auto bad = support.first_violation(pt)) {
    throw ProtocolViolation("stochastic query at a point outside the support state: " + *bad);
  }
  OracleReply r = deterministic_query(params, pt);
  auto pert = draw_perturbation(params, support, r, rng);
  if (!pert) return r;
  const double realized = realized_value(params, *pert);
  if (pert->variable == Variable::x) {
    r.gg_x[pert->index0] = realized;
  } else {
    r.gg_y[pert->index0] = realized;
  }
  r.perturbation = pert;
  return r;
}

std::optional<std::string> subspace_violation(const DerivedInstanceParams& params,
                                              const SupportState& support, std::size_t t) {
  const std::size_t n = params.n;
  std::size_t y_limit = 0;
  std::size_t x_limit = 0;
  if (t > 0) {
    const std::size_t K = (t - 1) / n;
    const std::size_t k = (t - 1) % n + 1;
    y_limit = (K + 1) * n + k;
    x_limit = K;
  }
  if (support.y_max_active() > y_limit) {
    return "after " + std::to_string(t) + " queries y flat index " + std::to_string(support.y_max_active()) +
           " is active (limit " + std::to_string(y_limit) + ")";
  }
  if (support.x_max_active() > x_limit) {
    return "after " + std::to_string(t) + " queries x index " + std::to_string(support.x_max_active()) +
           " is active (limit " + std::to_string(x_limit) + ")";
  }
  return std::nullopt;
}

std::vector<ActivationEvent> absorb_reply(SupportState& support, const OracleReply& reply,
                                          std::size_t query_index) {
  std::vector<ActivationEvent> events;
  for (std::size_t k = 0; k < reply.gg_y.size(); ++k) {
    if (reply.gg_y[k] != 0.0 && support.activate_y(k)) {
      events.push_back({query_index, Variable::y, k + 1, Trigger::g_oracle});
    }
  }
  for (std::size_t k = 0; k < reply.gf_y.size(); ++k) {
    if (reply.gf_y[k] != 0.0 && support.activate_y(k)) {
      events.push_back({query_index, Variable::y, k + 1, Trigger::f_oracle});
    }
  }
  for (std::size_t i = 0; i < reply.gg_x.size(); ++i) {
    if (reply.gg_x[i] != 0.0 && support.activate_x(i)) {
      events.push_back({query_index, Variable::x, i + 1, Trigger::g_oracle});
    }
  }
  for (std::size_t i = 0; i < reply.gf_x.size(); ++i) {
    if (reply.gf_x[i] != 0.0 && support.activate_x(i)) {
      events.push_back({query_index, Variable::x, i + 1, Trigger::f_oracle});
    }
  }
  return events;
}

namespace {

void admit_point(SupportState& support, const BilevelPoint& pt, std::size_t query_index, bool enforce,
                 std::vector<ActivationEvent>& events) {
  if (auto bad = support.first_violation(pt)) {
    if (enforce) throw ZeroRespectingViolation("zero-respecting violation: " + *bad);
    for (std::size_t k = 0; k < pt.y.size(); ++k) {
      if (pt.y[k] != 0.0 && support.activate_y(k)) {
        events.push_back({query_index, Variable::y, k + 1, Trigger::algorithm_span});
      }
    }
    for (std::size_t i = 0; i < pt.x.size(); ++i) {
      if (pt.x[i] != 0.0 && support.activate_x(i)) {
        events.push_back({query_index, Variable::x, i + 1, Trigger::algorithm_span});
      }
    }
  }
}

}  // namespace

std::vector<ActivationEvent> span_update(SupportState& support, const OracleReply& reply,
                                         const BilevelPoint& proposed, std::size_t query_index,
                                         bool enforce) {
  auto events = absorb_reply(support, reply, query_index);
  admit_point(support, proposed, query_index, enforce, events);
  return events;
}

VarianceEstimate variance_estimate(const DerivedInstanceParams& params, const BilevelPoint& pt,
                                   const SupportState& support, std::size_t samples, SplitRng& rng) {
  if (samples < 10'000) throw std::invalid_argument("variance_estimate: need at least 1e4 samples");
  if (auto bad = support.first_violation(pt)) {
    throw ProtocolViolation("variance_estimate: point outside the support state: " + *bad);
  }
  VarianceEstimate est;
  est.samples = samples;
  const OracleReply exact = deterministic_query(params, pt);
  const auto pert = perturbation_target(params, support, exact);
  if (!pert || params.p >= 1.0) return est;

  // Only the perturbed coordinate is random, so |G - mean|^2 reduces to the
  // squared deviation of that coordinate. Two passes: mean, then moments.
  std::vector<double> draws(samples);
  double mean = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto d = draw_perturbation(params, support, exact, rng);
    draws[s] = realized_value(params, *d);
    mean += draws[s];
  }
  mean /= static_cast<double>(samples);
  double m2 = 0.0;
  double m4 = 0.0;
  for (double d : draws) {
    const double dev2 = (d - mean) * (d - mean);
    m2 += dev2;
    m4 += dev2 * dev2;
  }
  const double nd = static_cast<double>(samples);
  est.variance = m2 / (nd - 1.0);
  const double var_of_dev2 = m4 / nd - (m2 / nd) * (m2 / nd);
  est.stderr_ = std::sqrt(std::max(var_of_dev2, 0.0) / nd);
  return est;
}

VarianceEstimate variance_estimate(const DerivedInstanceParams& params, const BilevelPoint& pt,
                                   std::size_t samples, SplitRng& rng) {
  return variance_estimate(params, pt, SupportState::from_point(params, pt), samples, rng);
}

OracleSession::OracleSession(const DerivedInstanceParams& params, std::uint64_t seed, bool enforce)
    : params_(&params), seed_(seed), enforce_(enforce), rng_(seed, 0x0AC1E), support_(params) {}

void OracleSession::propose(const BilevelPoint& pt) {
  admit_point(support_, pt, calls_, enforce_, events_);
}

const OracleReply& OracleSession::query(const BilevelPoint& pt) {
  propose(pt);
  ++calls_;
  if (params_->mode == Mode::stochastic) {
    last_ = stochastic_query(*params_, pt, support_, rng_);
  } else {
    last_ = deterministic_query(*params_, pt);
  }
  auto fresh = absorb_reply(support_, last_, calls_);
  events_.insert(events_.end(), fresh.begin(), fresh.end());
  return last_;
}

}  // namespace bilevel_lb
