#include "aawr/oracle.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseLU>

#include "aawr/errors.hpp"

namespace aawr::oracle {

namespace {

using SparseMatrix = EnvAgentMdp::SparseMatrix;

// Per-joint policy row: mu(. | z(j)).
Eigen::MatrixXd joint_policy(const EnvAgentMdp& mdp, const Policy& mu) {
  Eigen::MatrixXd out(mdp.num_joint(), mdp.num_actions);
  for (int j = 0; j < mdp.num_joint(); ++j) out.row(j) = mu.row(mdp.joint_states[static_cast<std::size_t>(j)].agent_state);
  return out;
}

Eigen::MatrixXd q_from_v(const EnvAgentMdp& mdp, const Eigen::VectorXd& v) {
  Eigen::MatrixXd q = mdp.reward;
  for (int a = 0; a < mdp.num_actions; ++a) q.col(a) += mdp.gamma * (mdp.transition[static_cast<std::size_t>(a)] * v);
  return q;
}

// Stop when |x_{n+1} - x_n| <= tol (1 - gamma) / gamma, which bounds the distance
// to the fixed point of a gamma-contraction by tol.
double stop_threshold(double gamma, double tol) { return gamma > 0.0 ? tol * (1.0 - gamma) / gamma : 0.0; }

constexpr int kMaxIterations = 1'000'000;

}  // namespace

void validate_policy(const EnvAgentMdp& mdp, const Policy& mu) {
  if (mu.rows() != mdp.num_agent_states() || mu.cols() != mdp.num_actions)
    throw ValidationError("policy shape does not match the agent-state MDP");
  for (Eigen::Index z = 0; z < mu.rows(); ++z) {
    if ((mu.row(z).array() < 0.0).any() || !mu.row(z).allFinite())
      throw ValidationError("policy row " + std::to_string(z) + " has an invalid entry");
    if (std::abs(mu.row(z).sum() - 1.0) > 1e-9) throw ValidationError("policy row " + std::to_string(z) + " does not sum to 1");
  }
}

Policy uniform_policy(const EnvAgentMdp& mdp) {
  return Policy::Constant(mdp.num_agent_states(), mdp.num_actions, 1.0 / mdp.num_actions);
}

Policy tabulate_policy(const EnvAgentMdp& mdp, const WindowPolicy& policy) {
  Policy out(mdp.num_agent_states(), mdp.num_actions);
  for (int z = 0; z < mdp.num_agent_states(); ++z) out.row(z) = policy(mdp.agent_states[static_cast<std::size_t>(z)]).transpose();
  return out;
}

Policy random_policy(const EnvAgentMdp& mdp, std::uint64_t seed) {
  Rng rng(seed);
  Policy out(mdp.num_agent_states(), mdp.num_actions);
  for (Eigen::Index z = 0; z < out.rows(); ++z) {
    for (Eigen::Index a = 0; a < out.cols(); ++a) out(z, a) = 0.1 + uniform01(rng);
    out.row(z) /= out.row(z).sum();
  }
  return out;
}

SparseMatrix policy_transition(const EnvAgentMdp& mdp, const Policy& mu) {
  const Eigen::MatrixXd pj = joint_policy(mdp, mu);
  SparseMatrix out(mdp.num_joint(), mdp.num_joint());
  for (int a = 0; a < mdp.num_actions; ++a) {
    SparseMatrix scaled = pj.col(a).asDiagonal() * mdp.transition[static_cast<std::size_t>(a)];
    out += scaled;
  }
  out.makeCompressed();
  return out;
}

PrivilegedValues evaluate_privileged(const EnvAgentMdp& mdp, const Policy& mu, double tol, EvalMethod method) {
  validate_policy(mdp, mu);
  const Eigen::MatrixXd pj = joint_policy(mdp, mu);
  const Eigen::VectorXd r_mu = (pj.array() * mdp.reward.array()).rowwise().sum();
  PrivilegedValues out;
  if (method == EvalMethod::DirectSolve) {
    if (mdp.num_joint() > kDirectSolveLimit) throw CapacityError("direct solve limited to small joint MDPs");
    SparseMatrix system(mdp.num_joint(), mdp.num_joint());
    system.setIdentity();
    system -= mdp.gamma * policy_transition(mdp, mu);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(Eigen::SparseMatrix<double>(system));
    if (lu.info() != Eigen::Success) throw std::runtime_error("policy evaluation factorization failed");
    out.v = lu.solve(r_mu);
    out.q = q_from_v(mdp, out.v);
    return out;
  }
  // Iterate the asymmetric Bellman operator on Q; V is the mu-average of Q.
  Eigen::MatrixXd q = mdp.reward;
  const double threshold = stop_threshold(mdp.gamma, tol);
  for (int it = 1; it <= kMaxIterations; ++it) {
    const Eigen::VectorXd v = (pj.array() * q.array()).rowwise().sum();
    Eigen::MatrixXd next = q_from_v(mdp, v);
    const double delta = (next - q).cwiseAbs().maxCoeff();
    q.swap(next);
    if (delta <= threshold) {
      out.iterations = it;
      break;
    }
  }
  out.q = q;
  out.v = (pj.array() * q.array()).rowwise().sum();
  return out;
}

Visitation discounted_visitation(const EnvAgentMdp& mdp, const Policy& mu, double tol, EvalMethod method) {
  validate_policy(mdp, mu);
  const SparseMatrix p_mu = policy_transition(mdp, mu);
  const SparseMatrix p_t = p_mu.transpose();
  const double g = mdp.gamma;
  Visitation vis;
  if (method == EvalMethod::DirectSolve) {
    if (mdp.num_joint() > kDirectSolveLimit) throw CapacityError("direct solve limited to small joint MDPs");
    SparseMatrix system(mdp.num_joint(), mdp.num_joint());
    system.setIdentity();
    system -= g * p_t;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(Eigen::SparseMatrix<double>(system));
    if (lu.info() != Eigen::Success) throw std::runtime_error("visitation factorization failed");
    vis.joint = lu.solve(Eigen::VectorXd((1.0 - g) * mdp.initial));
  } else {
    // d_{n+1} = (1 - g) rho + g P^T d_n contracts with factor g in L1.
    Eigen::VectorXd d = mdp.initial;
    const double threshold = stop_threshold(g, tol);
    for (int it = 0; it < kMaxIterations; ++it) {
      Eigen::VectorXd next = (1.0 - g) * mdp.initial + g * (p_t * d);
      const double delta = (next - d).lpNorm<1>();
      d.swap(next);
      if (delta <= threshold) break;
    }
    vis.joint = d;
  }
  vis.joint = vis.joint.cwiseMax(0.0);
  vis.marginal = Eigen::VectorXd::Zero(mdp.num_agent_states());
  for (int j = 0; j < mdp.num_joint(); ++j) vis.marginal(mdp.joint_states[static_cast<std::size_t>(j)].agent_state) += vis.joint(j);
  vis.conditional = Eigen::VectorXd::Zero(mdp.num_joint());
  vis.reachable.assign(static_cast<std::size_t>(mdp.num_agent_states()), false);
  for (int z = 0; z < mdp.num_agent_states(); ++z) vis.reachable[static_cast<std::size_t>(z)] = vis.marginal(z) > 0.0;
  for (int j = 0; j < mdp.num_joint(); ++j) {
    const int z = mdp.joint_states[static_cast<std::size_t>(j)].agent_state;
    if (vis.marginal(z) > 0.0) vis.conditional(j) = vis.joint(j) / vis.marginal(z);
  }
  return vis;
}

SymmetricValues symmetric_values(const EnvAgentMdp& mdp, const PrivilegedValues& priv, const Visitation& vis) {
  SymmetricValues out;
  out.q = Eigen::MatrixXd::Zero(mdp.num_agent_states(), mdp.num_actions);
  out.v = Eigen::VectorXd::Zero(mdp.num_agent_states());
  for (int j = 0; j < mdp.num_joint(); ++j) {
    const int z = mdp.joint_states[static_cast<std::size_t>(j)].agent_state;
    out.q.row(z) += vis.conditional(j) * priv.q.row(j);
    out.v(z) += vis.conditional(j) * priv.v(j);
  }
  out.reachable = vis.reachable;
  return out;
}

SymmetricTdResult symmetric_td_fixed_point(const EnvAgentMdp& mdp, const Policy& mu, const Visitation& vis,
                                           double tol) {
  validate_policy(mdp, mu);
  const int nz = mdp.num_agent_states();
  // Aggregation operator: (G x)(z) = sum_{j in z} d(j|z) x(j).
  Eigen::SparseMatrix<double, Eigen::RowMajor> aggregate(nz, mdp.num_joint());
  {
    std::vector<Eigen::Triplet<double>> trips;
    for (int j = 0; j < mdp.num_joint(); ++j)
      if (vis.conditional(j) > 0.0) trips.emplace_back(mdp.joint_states[static_cast<std::size_t>(j)].agent_state, j, vis.conditional(j));
    aggregate.setFromTriplets(trips.begin(), trips.end());
  }
  Eigen::VectorXi z_of(mdp.num_joint());
  for (int j = 0; j < mdp.num_joint(); ++j) z_of(j) = mdp.joint_states[static_cast<std::size_t>(j)].agent_state;
  const Eigen::MatrixXd r_sym = aggregate * mdp.reward;

  SymmetricTdResult out;
  out.reachable = vis.reachable;
  Eigen::MatrixXd q = r_sym;
  double prev_delta = -1.0;
  const double threshold = stop_threshold(mdp.gamma, tol);
  for (int it = 1; it <= kMaxIterations; ++it) {
    const Eigen::VectorXd w = (mu.array() * q.array()).rowwise().sum();  // sum_a' mu(a'|z') Q(z', a')
    Eigen::VectorXd w_joint(mdp.num_joint());
    for (int j = 0; j < mdp.num_joint(); ++j) w_joint(j) = w(z_of(j));
    Eigen::MatrixXd next = r_sym;
    for (int a = 0; a < mdp.num_actions; ++a)
      next.col(a) += mdp.gamma * (aggregate * (mdp.transition[static_cast<std::size_t>(a)] * w_joint));
    const double delta = (next - q).cwiseAbs().maxCoeff();
    if (prev_delta > 1e-12 && delta > 1e-12) out.max_contraction_ratio = std::max(out.max_contraction_ratio, delta / prev_delta);
    prev_delta = delta;
    q.swap(next);
    if (delta <= threshold) {
      out.iterations = it;
      break;
    }
  }
  out.q = q;
  return out;
}

ValueTable evaluate(const EnvAgentMdp& mdp, const Policy& mu, double tol) {
  ValueTable t;
  auto priv = evaluate_privileged(mdp, mu, tol);
  t.visitation = discounted_visitation(mdp, mu, tol);
  auto sym = symmetric_values(mdp, priv, t.visitation);
  t.q_priv = std::move(priv.q);
  t.v_priv = std::move(priv.v);
  t.q_sym = std::move(sym.q);
  t.v_sym = std::move(sym.v);
  t.policy = mu;
  return t;
}

Eigen::MatrixXd privileged_advantage(const PrivilegedValues& priv) { return priv.q.colwise() - priv.v; }
Eigen::MatrixXd symmetric_advantage(const SymmetricValues& sym) { return sym.q.colwise() - sym.v; }

Policy awr_update_privileged(const EnvAgentMdp& mdp, const Policy& mu, const Eigen::MatrixXd& advantage, double beta,
                             const Visitation& vis) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  validate_policy(mdp, mu);
  Policy out = mu;
  for (int z = 0; z < mdp.num_agent_states(); ++z) {
    if (!vis.reachable[static_cast<std::size_t>(z)]) continue;
    const auto& members = mdp.members()[static_cast<std::size_t>(z)];
    double shift = -std::numeric_limits<double>::infinity();
    for (int j : members)
      if (vis.conditional(j) > 0.0) shift = std::max(shift, advantage.row(j).maxCoeff() / beta);
    Eigen::RowVectorXd weight = Eigen::RowVectorXd::Zero(mdp.num_actions);
    for (int j : members)
      if (vis.conditional(j) > 0.0) weight += vis.conditional(j) * ((advantage.row(j).array() / beta) - shift).exp().matrix();
    const Eigen::RowVectorXd unnorm = mu.row(z).cwiseProduct(weight);
    out.row(z) = unnorm / unnorm.sum();
  }
  return out;
}

Policy awr_update_symmetric(const Policy& mu, const Eigen::MatrixXd& advantage, double beta) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  Policy out = mu;
  for (Eigen::Index z = 0; z < mu.rows(); ++z) {
    const Eigen::ArrayXd scaled = advantage.row(z).transpose().array() / beta;
    const Eigen::RowVectorXd unnorm = mu.row(z).array() * (scaled - scaled.maxCoeff()).exp().transpose();
    out.row(z) = unnorm / unnorm.sum();
  }
  return out;
}

double expected_return(const EnvAgentMdp& mdp, const Eigen::VectorXd& v) { return mdp.initial.dot(v); }

double expected_return(const EnvAgentMdp& mdp, const Policy& pi, double tol) {
  return expected_return(mdp, evaluate_privileged(mdp, pi, tol).v);
}

double policy_improvement_from_advantage(const EnvAgentMdp& mdp, const Policy& pi, const Eigen::MatrixXd& advantage_mu,
                                         double tol) {
  const Visitation d_pi = discounted_visitation(mdp, pi, tol);
  double acc = 0.0;
  for (int j = 0; j < mdp.num_joint(); ++j)
    acc += d_pi.joint(j) * pi.row(mdp.joint_states[static_cast<std::size_t>(j)].agent_state).dot(advantage_mu.row(j));
  return acc / (1.0 - mdp.gamma);
}

Eigen::VectorXd total_variation(const Policy& a, const Policy& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("policy shapes differ");
  return 0.5 * (a - b).cwiseAbs().rowwise().sum();
}

Eigen::VectorXd optimal_state_values(const PomdpSpec& spec, double tol) {
  spec.validate();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(spec.num_states());
  const double threshold = stop_threshold(spec.gamma, tol);
  for (int it = 0; it < kMaxIterations; ++it) {
    Eigen::MatrixXd q = spec.reward;
    for (int a = 0; a < spec.num_actions(); ++a) q.col(a) += spec.gamma * (spec.transition[static_cast<std::size_t>(a)] * v);
    Eigen::VectorXd next = q.rowwise().maxCoeff();
    const double delta = (next - v).cwiseAbs().maxCoeff();
    v.swap(next);
    if (delta <= threshold) break;
  }
  return v;
}

double optimal_state_return(const PomdpSpec& spec, double tol) { return spec.initial.dot(optimal_state_values(spec, tol)); }

WindowSearchResult window_policy_iteration(const EnvAgentMdp& mdp, int max_rounds, double tol) {
  WindowSearchResult best;
  Policy current = uniform_policy(mdp);
  best.policy = current;
  best.value = -std::numeric_limits<double>::infinity();
  // Greedy choices for agent states the current policy no longer reaches are
  // kept from the last round in which they were reached.
  Policy sticky = current;
  for (int round = 0; round < max_rounds; ++round) {
    const auto priv = evaluate_privileged(mdp, current, tol);
    const double value = expected_return(mdp, priv.v);
    best.rounds = round + 1;
    if (value > best.value + tol) {
      best.value = value;
      best.policy = current;
    } else if (round > 0) {
      break;
    }
    const auto vis = discounted_visitation(mdp, current, tol);
    const auto sym = symmetric_values(mdp, priv, vis);
    Policy next = sticky;
    for (int z = 0; z < mdp.num_agent_states(); ++z) {
      if (!vis.reachable[static_cast<std::size_t>(z)]) continue;
      Eigen::Index arg = 0;
      sym.q.row(z).maxCoeff(&arg);
      // Keep the incumbent action on ties so the iteration terminates.
      Eigen::Index incumbent = 0;
      current.row(z).maxCoeff(&incumbent);
      if (current(z, incumbent) == 1.0 && sym.q(z, incumbent) >= sym.q(z, arg) - 1e-12) arg = incumbent;
      next.row(z).setZero();
      next(z, arg) = 1.0;
    }
    sticky = next;
    if (next == current) break;
    current = next;
  }
  return best;
}

}  // namespace aawr::oracle
