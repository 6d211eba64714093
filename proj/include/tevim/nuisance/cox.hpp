#pragma once

// Cox proportional hazards with Breslow ties and Breslow baseline hazard.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/core/step_cumhaz.hpp"
#include "tevim/data/dataset.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

struct CoxOptions {
  double tolerance = 1e-9;  ///< on the sup-norm of the per-record score
  int max_iterations = 100;
  double divergence_bound = 50.0;
};

struct CoxFitInfo {
  int iterations = 0;
  double log_partial_likelihood = 0.0;
  double gradient_norm = 0.0;
  Eigen::VectorXd standard_errors;  ///< sqrt of the diagonal of the inverse observed information
};

namespace detail {

struct CoxProblem {
  std::vector<double> time;
  std::vector<int> status;
  Eigen::MatrixXd z;  // centered design
  Eigen::RowVectorXd center;
  std::vector<std::size_t> order;  // descending time
};

inline CoxProblem make_cox_problem(const SurvivalDataset& data, std::span<const std::size_t> rows,
                                   HazardTarget target, const CovariateSpec& spec) {
  CoxProblem p;
  const std::size_t m = rows.size();
  const std::size_t w = spec.width();
  p.time.resize(m);
  p.status.resize(m);
  p.z.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(w));
  std::vector<double> buf(w);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t i = rows[r];
    p.time[r] = data.time(i);
    p.status[r] = target == HazardTarget::event ? data.event(i) : 1 - data.event(i);
    spec.fill(data.treatment(i), data.x(i), buf);
    for (std::size_t c = 0; c < w; ++c) p.z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = buf[c];
  }
  p.center = m > 0 ? Eigen::RowVectorXd(p.z.colwise().mean()) : Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(w));
  p.z.rowwise() -= p.center;
  p.order.resize(m);
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  std::stable_sort(p.order.begin(), p.order.end(),
                   [&](std::size_t a, std::size_t b) { return p.time[a] > p.time[b]; });
  return p;
}

struct CoxDerivatives {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

// Breslow log partial likelihood with its score and observed information.
inline CoxDerivatives cox_derivatives(const CoxProblem& p, const Eigen::VectorXd& beta, bool with_hessian) {
  const Eigen::Index w = p.z.cols();
  const Eigen::VectorXd eta = p.z * beta;
  const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
  CoxDerivatives out;
  out.score = Eigen::VectorXd::Zero(w);
  out.information = Eigen::MatrixXd::Zero(w, w);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(w);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(w, w);
  const std::size_t m = p.order.size();
  std::size_t g = 0;
  while (g < m) {
    std::size_t end = g;
    const double t = p.time[p.order[g]];
    int deaths = 0;
    Eigen::VectorXd zsum = Eigen::VectorXd::Zero(w);
    double etasum = 0.0;
    while (end < m && p.time[p.order[end]] == t) {
      const std::size_t r = p.order[end];
      const double wr = std::exp(eta[static_cast<Eigen::Index>(r)] - shift);
      const auto zr = p.z.row(static_cast<Eigen::Index>(r)).transpose();
      s0 += wr;
      s1 += wr * zr;
      if (with_hessian) s2.noalias() += wr * zr * zr.transpose();
      if (p.status[r] == 1) {
        ++deaths;
        zsum += zr;
        etasum += eta[static_cast<Eigen::Index>(r)];
      }
      ++end;
    }
    if (deaths > 0) {
      const Eigen::VectorXd mean = s1 / s0;
      out.loglik += etasum - deaths * (std::log(s0) + shift);
      out.score += zsum - deaths * mean;
      if (with_hessian) out.information += deaths * (s2 / s0 - mean * mean.transpose());
    }
    g = end;
  }
  return out;
}

inline StepCumHazard breslow_from_problem(const CoxProblem& p, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = p.z * beta;
  std::vector<double> times;
  std::vector<double> jumps;
  double s0 = 0.0;
  const std::size_t m = p.order.size();
  std::size_t g = 0;
  while (g < m) {
    std::size_t end = g;
    const double t = p.time[p.order[g]];
    int deaths = 0;
    while (end < m && p.time[p.order[end]] == t) {
      const std::size_t r = p.order[end];
      s0 += std::exp(eta[static_cast<Eigen::Index>(r)]);
      deaths += p.status[r];
      ++end;
    }
    if (deaths > 0) {
      times.push_back(t);
      jumps.push_back(deaths / s0);
    }
    g = end;
  }
  std::reverse(times.begin(), times.end());
  std::reverse(jumps.begin(), jumps.end());
  return StepCumHazard(std::move(times), std::move(jumps));
}

}  // namespace detail

/// Fitted Cox model Λ̂(u | a, x) = Λ̂₀(u) · exp(β̂ᵀ z(a, x)).
class CoxModel final : public HazardModel {
 public:
  CoxModel(CovariateSpec spec, Eigen::VectorXd beta, Eigen::RowVectorXd center,
           StepCumHazard centered_baseline, CoxFitInfo info)
      : spec_(std::move(spec)),
        beta_(std::move(beta)),
        center_(std::move(center)),
        baseline_(std::move(centered_baseline)),
        info_(info) {}

  StepCumHazard predict(int a, std::span<const double> x) const override {
    return baseline_.scaled(std::exp(std::min(centered_lp(a, x), 700.0)));
  }
  std::string kind() const override { return "cox"; }

  const Eigen::VectorXd& coefficients() const noexcept { return beta_; }
  const CovariateSpec& spec() const noexcept { return spec_; }
  const CoxFitInfo& info() const noexcept { return info_; }

  /// Baseline Λ̂₀ at z = 0 (uncentered parametrisation).
  StepCumHazard baseline() const {
    const double lp0 = -center_.dot(beta_.transpose());
    if (baseline_.empty()) return baseline_;
    return baseline_.scaled(std::exp(lp0));
  }

 private:
  double centered_lp(int a, std::span<const double> x) const {
    std::vector<double> z(spec_.width());
    spec_.fill(a, x, z);
    double lp = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      lp += beta_[static_cast<Eigen::Index>(c)] * (z[c] - center_[static_cast<Eigen::Index>(c)]);
    }
    return lp;
  }

  CovariateSpec spec_;
  Eigen::VectorXd beta_;
  Eigen::RowVectorXd center_;
  StepCumHazard baseline_;
  CoxFitInfo info_;
};

/// Maximises the Breslow partial likelihood by damped Newton-Raphson from
/// β = 0 (step halving on likelihood decrease). For target = censoring the
/// event indicator is replaced by 1 − Δ.
inline CoxModel fit_cox(const SurvivalDataset& data, std::span<const std::size_t> rows,
                        HazardTarget target, const CovariateSpec& spec, const CoxOptions& opt = {}) {
  spec.validate(data.d());
  auto problem = detail::make_cox_problem(data, rows, target, spec);
  const int n_events = std::accumulate(problem.status.begin(), problem.status.end(), 0);
  if (n_events == 0) {
    throw Error("nuisance", std::string("cox: no ") +
                                (target == HazardTarget::event ? "events" : "censorings") +
                                " to fit");
  }
  const Eigen::Index w = static_cast<Eigen::Index>(spec.width());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(w);
  CoxFitInfo info;
  const double scale = static_cast<double>(rows.size());
  if (w > 0) {
    auto cur = detail::cox_derivatives(problem, beta, true);
    bool converged = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
      info.iterations = it;
      info.gradient_norm = cur.score.cwiseAbs().maxCoeff() / scale;
      if (info.gradient_norm < opt.tolerance) {
        converged = true;
        break;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cur.information);
      const double top = eig.eigenvalues().maxCoeff();
      if (!(eig.eigenvalues().minCoeff() > 1e-10 * std::max(top, 1e-300))) {
        throw Error("nuisance", "cox: singular information matrix (design not of full rank?)");
      }
      Eigen::VectorXd step = cur.information.ldlt().solve(cur.score);
      Eigen::VectorXd next = beta + step;
      auto trial = detail::cox_derivatives(problem, next, true);
      int halvings = 0;
      while (!(trial.loglik >= cur.loglik - 1e-12 * std::abs(cur.loglik)) && halvings < 40) {
        step *= 0.5;
        next = beta + step;
        trial = detail::cox_derivatives(problem, next, true);
        ++halvings;
      }
      beta = next;
      cur = std::move(trial);
      if (beta.cwiseAbs().maxCoeff() > opt.divergence_bound) {
        throw Error("nuisance", "cox: coefficients diverging (monotone likelihood)");
      }
    }
    if (!converged) {
      info.gradient_norm = cur.score.cwiseAbs().maxCoeff() / scale;
      if (info.gradient_norm >= opt.tolerance) {
        throw Error("nuisance", "cox: Newton-Raphson did not converge in " +
                                    std::to_string(opt.max_iterations) + " iterations");
      }
    }
    info.log_partial_likelihood = cur.loglik;
    info.standard_errors = cur.information.inverse().diagonal().cwiseSqrt();
  } else {
    info.log_partial_likelihood = detail::cox_derivatives(problem, beta, false).loglik;
  }
  auto baseline = detail::breslow_from_problem(problem, beta);
  return CoxModel(spec, beta, problem.center, std::move(baseline), info);
}

/// Breslow baseline for a fixed coefficient vector (β = 0 gives Nelson-Aalen).
inline StepCumHazard breslow_baseline(const SurvivalDataset& data, std::span<const std::size_t> rows,
                                      HazardTarget target, const CovariateSpec& spec,
                                      const Eigen::VectorXd& beta) {
  auto problem = detail::make_cox_problem(data, rows, target, spec);
  problem.z.rowwise() += problem.center;
  return detail::breslow_from_problem(problem, beta);
}

/// Nelson-Aalen estimator: jumps d_k / n_k at distinct target-event times.
inline StepCumHazard nelson_aalen(const SurvivalDataset& data, std::span<const std::size_t> rows,
                                  HazardTarget target = HazardTarget::event) {
  CovariateSpec none;
  none.treatment = false;
  return breslow_baseline(data, rows, target, none, Eigen::VectorXd());
}

}  // namespace tevim
