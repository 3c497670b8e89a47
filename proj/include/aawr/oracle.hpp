#pragma once

#include <vector>

#include <Eigen/Core>

#include "aawr/env_agent_mdp.hpp"
#include "aawr/envs.hpp"

/// Exact dynamic programming on the environment / agent-state MDP.
///
/// Privileged tables are indexed by joint state j = (s, z); symmetric tables
/// by agent-state index z. Policies are (num_agent_states x num_actions)
/// row-stochastic matrices, i.e. they never see s.
namespace aawr::oracle {

using Policy = Eigen::MatrixXd;

enum class EvalMethod { Iterate, DirectSolve };

inline constexpr double kDefaultTol = 1e-10;
inline constexpr int kDirectSolveLimit = 5000;

struct PrivilegedValues {
  Eigen::MatrixXd q;  ///< Q(s, z, a) as (joint x action)
  Eigen::VectorXd v;  ///< V(s, z)
  int iterations = 0;
};

struct Visitation {
  Eigen::VectorXd joint;        ///< d(s, z), sums to 1
  Eigen::VectorXd marginal;     ///< d(z)
  Eigen::VectorXd conditional;  ///< d(s | z) per joint index; 0 where d(z) == 0
  std::vector<bool> reachable;  ///< d(z) > 0
};

struct SymmetricValues {
  Eigen::MatrixXd q;  ///< Q(z, a) = E_{s ~ d(s|z)} Q(s, z, a)
  Eigen::VectorXd v;  ///< V(z)
  std::vector<bool> reachable;
};

struct SymmetricTdResult {
  Eigen::MatrixXd q;  ///< fixed point of the aggregated-bootstrap operator
  std::vector<bool> reachable;
  int iterations = 0;
  double max_contraction_ratio = 0.0;  ///< max over iterations of |dQ_n+1| / |dQ_n|
};

/// Bundle of every exact table for one behaviour policy.
struct ValueTable {
  Eigen::MatrixXd q_priv;
  Eigen::VectorXd v_priv;
  Eigen::MatrixXd q_sym;
  Eigen::VectorXd v_sym;
  Policy policy;
  Visitation visitation;
};

/// Throws ValidationError unless `mu` is (num_agent_states x num_actions) and row-stochastic.
void validate_policy(const EnvAgentMdp& mdp, const Policy& mu);

Policy uniform_policy(const EnvAgentMdp& mdp);
Policy tabulate_policy(const EnvAgentMdp& mdp, const WindowPolicy& policy);
/// Random row-stochastic policy with entries bounded away from zero.
Policy random_policy(const EnvAgentMdp& mdp, std::uint64_t seed);

/// Policy-averaged joint dynamics P_mu(j, j').
EnvAgentMdp::SparseMatrix policy_transition(const EnvAgentMdp& mdp, const Policy& mu);

/// Q^mu(s, z, a) and V^mu(s, z). Iterate stops once the sup-norm error is
/// provably below tol; DirectSolve uses a sparse LU factorization and is
/// limited to kDirectSolveLimit joint states.
PrivilegedValues evaluate_privileged(const EnvAgentMdp& mdp, const Policy& mu, double tol = kDefaultTol,
                                     EvalMethod method = EvalMethod::Iterate);

/// Normalized discounted visitation d(s, z) = (1 - gamma) sum_t gamma^t p_t(s, z).
Visitation discounted_visitation(const EnvAgentMdp& mdp, const Policy& mu, double tol = kDefaultTol,
                                 EvalMethod method = EvalMethod::Iterate);

SymmetricValues symmetric_values(const EnvAgentMdp& mdp, const PrivilegedValues& priv, const Visitation& vis);

/// Fixed point of Q(z,a) = E_{s~d(s|z)}[R(s,a) + gamma E_{z'~p(.|s,z,a)} sum_a' mu(a'|z') Q(z',a')],
/// i.e. TD learning on z alone, which bootstraps as if s' ~ d(s'|z').
SymmetricTdResult symmetric_td_fixed_point(const EnvAgentMdp& mdp, const Policy& mu, const Visitation& vis,
                                           double tol = kDefaultTol);

ValueTable evaluate(const EnvAgentMdp& mdp, const Policy& mu, double tol = kDefaultTol);

Eigen::MatrixXd privileged_advantage(const PrivilegedValues& priv);
Eigen::MatrixXd symmetric_advantage(const SymmetricValues& sym);

/// Exact maximizer over tabular policies of the privileged advantage-weighted
/// log-likelihood: pi(a|z) ∝ sum_s d(s|z) mu(a|z) exp(A(s,z,a)/beta).
/// Agent states with zero visitation keep mu.
Policy awr_update_privileged(const EnvAgentMdp& mdp, const Policy& mu, const Eigen::MatrixXd& advantage, double beta,
                             const Visitation& vis);

/// Symmetric counterpart: pi(a|z) ∝ mu(a|z) exp(A(z,a)/beta).
Policy awr_update_symmetric(const Policy& mu, const Eigen::MatrixXd& advantage, double beta);

/// J = E_{(s0,z0)}[V(s0, z0)].
double expected_return(const EnvAgentMdp& mdp, const Eigen::VectorXd& v);
double expected_return(const EnvAgentMdp& mdp, const Policy& pi, double tol = kDefaultTol);

/// (1 / (1 - gamma)) E_{d_pi} E_pi [A^mu]; equals J(pi) - J(mu) exactly.
double policy_improvement_from_advantage(const EnvAgentMdp& mdp, const Policy& pi, const Eigen::MatrixXd& advantage_mu,
                                         double tol = kDefaultTol);

/// Total variation between two policies per agent state.
Eigen::VectorXd total_variation(const Policy& a, const Policy& b);

/// Optimal values of the underlying fully observed MDP (value iteration on s).
Eigen::VectorXd optimal_state_values(const PomdpSpec& spec, double tol = kDefaultTol);
double optimal_state_return(const PomdpSpec& spec, double tol = kDefaultTol);

struct WindowSearchResult {
  Policy policy;
  double value = 0.0;
  int rounds = 0;
};

/// Greedy policy iteration restricted to window policies: starting from the
/// uniform policy, repeatedly pick argmax_a sum_s d(s|z) Q(s,z,a) and keep the
/// best deterministic policy found. This is a local search; agreement with an
/// independent upper bound certifies optimality.
WindowSearchResult window_policy_iteration(const EnvAgentMdp& mdp, int max_rounds = 50, double tol = 1e-9);

}  // namespace aawr::oracle
