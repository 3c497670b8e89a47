#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aawr/oracle.hpp"

/// Small hand-built instances and the checks run by `aawr verify`.
namespace aawr::witness {

/// Two equally likely states behind one observation, two actions, one rewarded
/// step: R(sA, a0) = R(sB, a1) = +gap and R(sA, a1) = R(sB, a0) = -gap.
PomdpSpec jensen_weight_instance(double gap, double gamma = 0.9);

/// Aliased states with probabilities p and 1 - p. In sA the risky action pays
/// risky_good, in sB it pays risky_bad; the safe action always pays 0.
PomdpSpec jensen_argmax_instance(double p = 0.9, double risky_good = 2.0, double risky_bad = -10.0,
                                 double gamma = 0.9);

/// s0 and s1 are distinguishable but step into s2 / s3, which share one
/// observation unless `reveal` is set. Only s2 pays. With k = 1 the symmetric
/// TD fixed point underestimates the value of s0's agent state by gamma / 2.
PomdpSpec bootstrap_bias_instance(double gamma = 0.9, bool reveal = false);

/// Replaces the emission of `spec` with the identity (one observation per state).
PomdpSpec fully_observed(PomdpSpec spec);

/// Check outcome as it appears in the verify report.
struct Check {
  std::string name;
  bool passed = false;
  nlohmann::json quantities;
  nlohmann::json tolerance;
};

using SymmetricTdFn = std::function<oracle::SymmetricTdResult(const EnvAgentMdp&, const oracle::Policy&,
                                                              const oracle::Visitation&, double)>;

struct VerifyOptions {
  /// Swappable for negative-control tests.
  SymmetricTdFn symmetric_td = [](const EnvAgentMdp& m, const oracle::Policy& mu, const oracle::Visitation& v,
                                  double tol) { return oracle::symmetric_td_fixed_point(m, mu, v, tol); };
  std::uint64_t seed = 0;
};

Check check_jensen_weight(double gap = 1.0, double beta = 1.0);
Check check_jensen_argmax(double beta = 1.0);
Check check_symmetric_td_bias(const VerifyOptions& opts = {});
Check check_symmetric_td_fully_observed(const VerifyOptions& opts = {});
Check check_asymmetric_fixed_point(std::uint64_t seed = 0);
Check check_closed_form_update(std::uint64_t seed = 0);
Check check_improvement_identity(std::uint64_t seed = 0);

/// Maximizes sum_a c_a log pi_a over the simplex by gradient ascent on logits.
Eigen::VectorXd maximize_weighted_log_likelihood(const Eigen::VectorXd& c, double grad_tol = 1e-13,
                                                 int max_iterations = 200);

std::vector<Check> run_all(const VerifyOptions& opts = {});
nlohmann::json report(const std::vector<Check>& checks);
bool all_passed(const std::vector<Check>& checks);

}  // namespace aawr::witness
