#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/data/dataset.hpp"
#include "tevim/nuisance/cox.hpp"
#include "tevim/nuisance/models.hpp"

namespace tevim {

/// Logistic regression of A on (1, x_main).
class LogisticModel final : public PropensityModel {
 public:
  LogisticModel(std::vector<std::size_t> covariates, Eigen::VectorXd coef, int iterations)
      : cols_(std::move(covariates)), coef_(std::move(coef)), iterations_(iterations) {}

  double predict_raw(std::span<const double> x) const override {
    double eta = coef_[0];
    for (std::size_t c = 0; c < cols_.size(); ++c) eta += coef_[static_cast<Eigen::Index>(c + 1)] * x[cols_[c]];
    return 1.0 / (1.0 + std::exp(-eta));
  }
  std::string kind() const override { return "logistic"; }

  /// (intercept, slopes...) in the order of the covariate list.
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
  int iterations() const noexcept { return iterations_; }

 private:
  std::vector<std::size_t> cols_;
  Eigen::VectorXd coef_;
  int iterations_ = 0;
};

/// Maximum likelihood by Newton-Raphson with step halving, started at 0.
/// Perfect separation shows up as |β| > 50 and is reported as an error.
inline LogisticModel fit_logistic(const SurvivalDataset& data, std::span<const std::size_t> rows,
                                  const std::vector<std::size_t>& covariates, const CoxOptions& opt = {}) {
  for (auto j : covariates) {
    if (j >= data.d()) throw Error("nuisance", "logistic: covariate index out of range");
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(covariates.size() + 1);
  Eigen::MatrixXd z(m, p);
  Eigen::VectorXd y(m);
  int treated = 0;
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::size_t i = rows[static_cast<std::size_t>(r)];
    z(r, 0) = 1.0;
    for (std::size_t c = 0; c < covariates.size(); ++c) z(r, static_cast<Eigen::Index>(c + 1)) = data.x(i, covariates[c]);
    y[r] = data.treatment(i);
    treated += data.treatment(i);
  }
  if (treated == 0 || treated == m) throw Error("nuisance", "logistic: single arm, both treatment arms required");

  auto loglik = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = z * b;
    double ll = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      const double e = eta[r];
      // log(1 + exp(e)) computed stably
      const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += y[r] * e - softplus;
    }
    return ll;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = loglik(beta);
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const Eigen::VectorXd prob = (1.0 + (-(z * beta)).array().exp()).inverse().matrix();
    const Eigen::VectorXd score = z.transpose() * (y - prob);
    if (score.cwiseAbs().maxCoeff() / static_cast<double>(m) < opt.tolerance) {
      return LogisticModel(covariates, beta, it);
    }
    if (it == opt.max_iterations) break;
    const Eigen::VectorXd wts = prob.array() * (1.0 - prob.array());
    const Eigen::MatrixXd info = z.transpose() * wts.asDiagonal() * z;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    if (!(eig.eigenvalues().minCoeff() > 1e-10 * std::max(eig.eigenvalues().maxCoeff(), 1e-300))) {
      if (beta.cwiseAbs().maxCoeff() > 10.0) {
        throw Error("nuisance", "logistic: perfect separation (coefficients diverging)");
      }
      throw Error("nuisance", "logistic: singular information matrix");
    }
    Eigen::VectorXd step = info.ldlt().solve(score);
    Eigen::VectorXd next = beta + step;
    double ll_next = loglik(next);
    for (int h = 0; h < 40 && !(ll_next >= ll - 1e-12 * std::abs(ll)); ++h) {
      step *= 0.5;
      next = beta + step;
      ll_next = loglik(next);
    }
    beta = next;
    ll = ll_next;
    if (beta.cwiseAbs().maxCoeff() > opt.divergence_bound) {
      throw Error("nuisance", "logistic: perfect separation (coefficients diverging)");
    }
  }
  throw Error("nuisance", "logistic: Newton-Raphson did not converge in " +
                              std::to_string(opt.max_iterations) + " iterations");
}

}  // namespace tevim
