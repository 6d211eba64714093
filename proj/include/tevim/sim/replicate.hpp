#pragma once

// Repeated simulate-and-estimate runs over a grid of sample sizes and
// nuisance choices, summarised as bias / coverage / SD / mean SE / MSE.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tevim/core/error.hpp"
#include "tevim/core/rng.hpp"
#include "tevim/data/dgp.hpp"
#include "tevim/estimators/estimate.hpp"
#include "tevim/oracle/oracle.hpp"

namespace tevim {

/// A-B[-CF]: A fits Λ, Λ_c and π (correct parametric models or forests),
/// B fits the regressions Ê_n (kernel smoother or forest).
struct Method {
  enum class Nuisances { correct, forest } nuisances = Nuisances::correct;
  enum class Regressor { kernel, forest } regressor = Regressor::kernel;
  bool cross_fit = true;

  std::string name() const {
    std::string s = nuisances == Nuisances::correct ? "correct" : "RF";
    s += regressor == Regressor::kernel ? "-kernel" : "-RF";
    if (cross_fit) s += "-CF";
    return s;
  }

  static Method parse(const std::string& text) {
    Method m;
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, '-');) parts.push_back(p);
    if (parts.size() < 2 || parts.size() > 3) throw Error("cli", "method '" + text + "' is not of the form A-B[-CF]");
    if (parts[0] == "correct") {
      m.nuisances = Nuisances::correct;
    } else if (parts[0] == "RF") {
      m.nuisances = Nuisances::forest;
    } else {
      throw Error("cli", "method '" + text + "': A must be correct or RF");
    }
    if (parts[1] == "kernel") {
      m.regressor = Regressor::kernel;
    } else if (parts[1] == "RF") {
      m.regressor = Regressor::forest;
    } else {
      throw Error("cli", "method '" + text + "': B must be kernel or RF");
    }
    m.cross_fit = parts.size() == 3;
    if (m.cross_fit && parts[2] != "CF") throw Error("cli", "method '" + text + "': suffix must be CF");
    return m;
  }
};

namespace detail {

inline std::vector<std::size_t> nonzero(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (v[j] != 0.0) out.push_back(j);
  }
  return out;
}

inline CovariateSpec formula_of(const WeibullCoxHazard& h) {
  CovariateSpec s;
  s.main = nonzero(h.coefficients);
  s.interactions = nonzero(h.interactions);
  s.treatment = h.treatment != 0.0 || !s.interactions.empty();
  return s;
}

}  // namespace detail

/// Cox and logistic working models holding exactly the terms with nonzero
/// coefficients in the data-generating configuration.
inline LearnerConfig correct_learners(const DgpConfig& c) {
  LearnerConfig l;
  l.event.kind = HazardLearner::Kind::cox;
  l.event.formula = detail::formula_of(c.outcome);
  HazardLearner cens;
  cens.kind = HazardLearner::Kind::cox;
  cens.formula = c.censoring ? detail::formula_of(*c.censoring) : CovariateSpec{{}, false, {}};
  l.censoring = cens;
  l.propensity.kind = PropensityLearner::Kind::logistic;
  l.propensity.covariates = detail::nonzero(c.propensity.coefficients);
  return l;
}

inline LearnerConfig learners_for(const Method& m, const DgpConfig& c, std::size_t trees) {
  LearnerConfig l;
  if (m.nuisances == Method::Nuisances::correct) {
    l = correct_learners(c);
  } else {
    l.event.kind = HazardLearner::Kind::rsf;
    l.event.forest.n_trees = trees;
    l.censoring = l.event;
    l.propensity.kind = PropensityLearner::Kind::forest;
    l.propensity.forest.n_trees = trees;
  }
  const auto kind = m.regressor == Method::Regressor::kernel ? RegressorLearner::Kind::kernel
                                                             : RegressorLearner::Kind::forest;
  l.tau_l.kind = kind;
  l.xj.kind = kind;
  l.tau_l.forest.n_trees = trees;
  l.xj.forest.n_trees = trees;
  return l;
}

struct ReplicationSetup {
  DgpConfig dgp;
  TargetSpec target;  ///< learners and cross_fit are set per method; seed per replication
  std::vector<std::size_t> sample_sizes{1000};
  std::vector<Method> methods{Method{}};
  std::size_t reps = 200;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  ///< 0: one per hardware thread
  std::size_t forest_trees = 300;
  bool with_zeta = false;  ///< also evaluate the logit-scale estimator on Ψ runs
};

struct ReplicationRecord {
  std::size_t rep = 0;
  std::size_t n = 0;
  std::string method;
  bool ok = false;
  bool degenerate = false;
  std::string error;
  double point = 0.0;
  double se = 0.0;
  std::array<double, 2> ci{0.0, 0.0};
  bool zeta_ok = false;
  double zeta_psi = 0.0;
  std::array<double, 2> zeta_ci{0.0, 0.0};
  std::string zeta_error;
};

inline std::uint64_t replication_seed(std::uint64_t master, std::size_t n, std::size_t rep) {
  return derive_seed(derive_seed(master, n), rep);
}

/// Runs every (n, rep) cell; all methods in a cell share one simulated
/// dataset. Results are stored by cell and method, so the output does not
/// depend on scheduling.
inline std::vector<ReplicationRecord> run_replications(const ReplicationSetup& setup,
                                                       const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  setup.dgp.validate();
  if (setup.reps == 0) throw Error("cli", "reps must be positive");
  if (setup.methods.empty() || setup.sample_sizes.empty()) throw Error("cli", "empty replication grid");
  const std::size_t cells = setup.sample_sizes.size() * setup.reps;
  const std::size_t per_cell = setup.methods.size();
  std::vector<ReplicationRecord> out(cells * per_cell);
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_lock;

  auto work = [&]() {
    for (std::size_t cell = next++; cell < cells; cell = next++) {
      const std::size_t n = setup.sample_sizes[cell / setup.reps];
      const std::size_t rep = cell % setup.reps;
      const std::uint64_t seed = replication_seed(setup.seed, n, rep);
      SurvivalDataset data;
      std::string sim_error;
      try {
        data = simulate(setup.dgp, n, derive_seed(seed, 1));
      } catch (const Error& e) {
        sim_error = e.what();
      }
      for (std::size_t m = 0; m < per_cell; ++m) {
        auto& rec = out[cell * per_cell + m];
        rec.rep = rep;
        rec.n = n;
        rec.method = setup.methods[m].name();
        if (!sim_error.empty()) {
          rec.error = sim_error;
          continue;
        }
        TargetSpec spec = setup.target;
        spec.learners = learners_for(setup.methods[m], setup.dgp, setup.forest_trees);
        spec.cross_fit = setup.methods[m].cross_fit;
        spec.seed = derive_seed(seed, 2);
        try {
          const auto cf = cross_fit_nuisances(data, spec);
          try {
            const auto r = estimate_target(data, spec, cf);
            rec.ok = true;
            rec.point = r.point;
            rec.se = r.se;
            rec.ci = r.ci;
          } catch (const DegenerateTarget& e) {
            rec.degenerate = true;
            rec.error = e.what();
          }
          if (setup.with_zeta && spec.kind == TargetKind::psi_l) {
            try {
              const auto z = estimate_zeta_l(data, spec, cf);
              rec.zeta_ok = true;
              rec.zeta_psi = *z.psi_point;
              rec.zeta_ci = *z.psi_ci;
            } catch (const Error& e) {
              rec.zeta_error = e.what();
            }
          }
        } catch (const Error& e) {
          rec.error = e.what();
        }
      }
      const std::size_t finished = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_lock);
        progress(finished, cells);
      }
    }
  };

  std::size_t threads = setup.threads > 0 ? setup.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cells);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return out;
}

struct SummaryRow {
  std::size_t n = 0;
  std::string method;
  double bias = 0.0;
  double coverage = 0.0;
  double sd = 0.0;
  double mean_se = 0.0;
  double mse = 0.0;
  std::size_t runs = 0;
  std::size_t failures = 0;
};

/// One row per (n, method) in grid order; failed runs are excluded from the
/// statistics and counted.
inline std::vector<SummaryRow> summarize(const std::vector<ReplicationRecord>& records, const ReplicationSetup& setup,
                                         double truth) {
  std::vector<SummaryRow> rows;
  for (auto n : setup.sample_sizes) {
    for (const auto& m : setup.methods) {
      SummaryRow row;
      row.n = n;
      row.method = m.name();
      std::vector<const ReplicationRecord*> ok;
      for (const auto& r : records) {
        if (r.n != n || r.method != row.method) continue;
        ++row.runs;
        if (r.ok) {
          ok.push_back(&r);
        } else {
          ++row.failures;
        }
      }
      if (!ok.empty()) {
        double sum = 0.0, se = 0.0, sq = 0.0;
        std::size_t covered = 0;
        for (const auto* r : ok) {
          sum += r->point;
          se += r->se;
          sq += (r->point - truth) * (r->point - truth);
          if (r->ci[0] <= truth && truth <= r->ci[1]) ++covered;
        }
        const double k = static_cast<double>(ok.size());
        const double mean = sum / k;
        double ss = 0.0;
        for (const auto* r : ok) ss += (r->point - mean) * (r->point - mean);
        row.bias = mean - truth;
        row.coverage = static_cast<double>(covered) / k;
        row.sd = ok.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
        row.mean_se = se / k;
        row.mse = sq / k;
      } else {
        row.bias = row.coverage = row.sd = row.mean_se = row.mse = std::nan("");
      }
      rows.push_back(row);
    }
  }
  return rows;
}

inline bool failure_rate_exceeded(const std::vector<SummaryRow>& rows, double limit = 0.05) {
  for (const auto& r : rows) {
    if (r.runs > 0 && static_cast<double>(r.failures) > limit * static_cast<double>(r.runs)) return true;
  }
  return false;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "n,method,bias,coverage,SD,mean SE,MSE,runs,failures\n";
  os << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.n << ',' << r.method << ',' << r.bias << ',' << r.coverage << ',' << r.sd << ',' << r.mean_se << ','
       << r.mse << ',' << r.runs << ',' << r.failures << '\n';
  }
}

/// Ground truth for the setup's target from the Monte Carlo oracle.
inline OracleResult replication_truth(const ReplicationSetup& setup, const OracleOptions& opt) {
  const auto& t = setup.target;
  switch (t.kind) {
    case TargetKind::theta_l: return oracle_theta(setup.dgp, t.subset, t.horizon, t.estimand, opt).theta_l;
    case TargetKind::theta_d: return oracle_theta(setup.dgp, {0}, t.horizon, t.estimand, opt).theta_d;
    case TargetKind::psi_l: return oracle_psi(setup.dgp, t.subset, t.horizon, t.estimand, opt);
    case TargetKind::zeta_l: {
      auto r = oracle_psi(setup.dgp, t.subset, t.horizon, t.estimand, opt);
      r.mc_se /= r.value * (1.0 - r.value);
      r.value = logit(r.value);
      return r;
    }
    case TargetKind::gamma_j: return oracle_omega(setup.dgp, t.covariate, t.horizon, t.estimand, opt).gamma;
    case TargetKind::chi_j: return oracle_omega(setup.dgp, t.covariate, t.horizon, t.estimand, opt).chi;
    case TargetKind::omega_j: return oracle_omega(setup.dgp, t.covariate, t.horizon, t.estimand, opt).omega;
  }
  throw Error("oracle", "unknown target kind");
}

/// The simulation design with no treatment-effect heterogeneity: the
/// outcome hazard keeps only the treatment main effect, so τ is constant
/// and Ω_j = 0 for every j.
inline DgpConfig null_heterogeneity_design() {
  auto c = weibull_cox_design();
  std::fill(c.outcome.coefficients.begin(), c.outcome.coefficients.end(), 0.0);
  std::fill(c.outcome.interactions.begin(), c.outcome.interactions.end(), 0.0);
  return c;
}

inline std::vector<std::string> preset_names() { return {"smoke", "psi-correct", "omega-correct", "psi-forest", "omega-null"}; }

/// Reduced-scale versions of the simulation study.
inline ReplicationSetup preset(const std::string& name) {
  ReplicationSetup s;
  s.dgp = weibull_cox_design();
  s.target.horizon = s.dgp.horizon;
  s.target.estimand = Estimand::survival;
  s.target.subset = {0};
  s.target.covariate = 0;
  s.target.folds = 10;
  s.target.inner_folds = 5;
  s.seed = 2024;
  const Method correct_cf{Method::Nuisances::correct, Method::Regressor::kernel, true};
  if (name == "smoke") {
    s.target.kind = TargetKind::omega_j;
    s.target.folds = 5;
    s.sample_sizes = {300};
    s.methods = {correct_cf};
    s.reps = 2;
  } else if (name == "psi-correct") {
    s.target.kind = TargetKind::psi_l;
    s.sample_sizes = {1000};
    s.methods = {correct_cf};
    s.reps = 200;
    s.with_zeta = true;
  } else if (name == "omega-correct") {
    s.target.kind = TargetKind::omega_j;
    s.sample_sizes = {500};
    s.methods = {correct_cf};
    s.reps = 200;
  } else if (name == "psi-forest") {
    s.target.kind = TargetKind::psi_l;
    s.sample_sizes = {1000};
    s.methods = {Method{Method::Nuisances::forest, Method::Regressor::forest, false},
                 Method{Method::Nuisances::forest, Method::Regressor::forest, true}};
    s.reps = 100;
    s.forest_trees = 50;
    s.with_zeta = true;
  } else if (name == "omega-null") {
    s.dgp = null_heterogeneity_design();
    s.target.kind = TargetKind::omega_j;
    s.sample_sizes = {500};
    s.methods = {correct_cf};
    s.reps = 400;
  } else {
    std::string known;
    for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
    throw Error("cli", "unknown preset '" + name + "' (known: " + known + ")");
  }
  return s;
}

inline nlohmann::json setup_to_json(const ReplicationSetup& s) {
  nlohmann::json j;
  j["dgp"] = dgp_to_json(s.dgp);
  j["target"] = s.target.label();
  j["horizon"] = s.target.horizon;
  j["estimand"] = s.target.estimand == Estimand::survival ? "survival" : "rmst";
  j["folds"] = s.target.folds;
  j["inner_folds"] = s.target.inner_folds;
  j["sample_sizes"] = s.sample_sizes;
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : s.methods) methods.push_back(m.name());
  j["methods"] = methods;
  j["reps"] = s.reps;
  j["seed"] = s.seed;
  j["forest_trees"] = s.forest_trees;
  j["with_zeta"] = s.with_zeta;
  return j;
}

}  // namespace tevim
