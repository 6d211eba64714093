// tevim: simulate / estimate / oracle / replicate from the command line.
//
// Exit codes: 0 success, 1 error, 2 degenerate target.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tevim/data/csv.hpp"
#include "tevim/data/dgp.hpp"
#include "tevim/estimators/estimate.hpp"
#include "tevim/oracle/oracle.hpp"
#include "tevim/sim/replicate.hpp"

#ifndef TEVIM_VERSION
#define TEVIM_VERSION "dev"
#endif

using namespace tevim;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error("cli", std::string("cannot open ") + what + " '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("cli", path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cli", "cannot write '" + path + "'");
  out << text;
}

/// Built-in design name or a JSON file.
DgpConfig load_dgp(const std::string& spec) {
  if (spec.empty() || spec == "weibull-cox") return weibull_cox_design();
  if (spec == "weibull-cox-literal") return weibull_cox_design_literal();
  if (spec == "null") return null_heterogeneity_design();
  return dgp_from_json(read_json_file(spec, "dgp config"));
}

json manifest(const std::string& command, const json& config, std::uint64_t seed) {
  return {{"tool", "tevim"},
          {"version", TEVIM_VERSION},
          {"command", command},
          {"config", config},
          {"config_hash", hex(fnv1a(config.dump()))},
          {"seed", seed}};
}

Estimand parse_estimand(const std::string& s) {
  if (s == "survival") return Estimand::survival;
  if (s == "rmst") return Estimand::rmst;
  throw Error("cli", "unknown estimand '" + s + "' (expected survival or rmst)");
}

std::vector<std::size_t> to_zero_based(const std::vector<std::size_t>& v, const char* what) {
  std::vector<std::size_t> out;
  for (auto j : v) {
    if (j == 0) throw Error("cli", std::string(what) + " indices are 1-based");
    out.push_back(j - 1);
  }
  return out;
}

struct TargetOptions {
  std::string target = "psi";
  std::vector<std::size_t> subset{1};
  std::size_t covariate = 1;
  std::optional<double> horizon;
  std::string estimand = "survival";
  std::size_t folds = 10;
  std::size_t inner_folds = 5;
  std::uint64_t seed = 0;
  std::string learners;
  bool no_cross_fit = false;
  bool fast_theta_d = false;
  double epsilon = 0.05;

  void add(CLI::App* app) {
    app->add_option("--target", target, "theta | theta_d | psi | zeta | gamma | chi | omega");
    app->add_option("--subset", subset, "covariate subset l, 1-based, comma separated")->delimiter(',');
    app->add_option("--covariate", covariate, "covariate j, 1-based");
    app->add_option("--horizon", horizon, "time horizon t");
    app->add_option("--estimand", estimand, "survival | rmst");
    app->add_option("--folds", folds, "outer folds K");
    app->add_option("--inner-folds", inner_folds, "inner folds K2 for the nested ATE");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--learners", learners, "learner config JSON");
    app->add_flag("--no-cross-fit", no_cross_fit, "fit and evaluate nuisances on the full sample");
    app->add_flag("--fast-theta-d", fast_theta_d, "ATE inside each fold from the in-sample mean (no nesting)");
    app->add_option("--epsilon", epsilon, "truncation level for propensity and weights");
  }

  TargetSpec spec(double default_horizon) const {
    TargetSpec s;
    s.kind = target_from_string(target);
    s.subset = to_zero_based(subset, "subset");
    if (covariate == 0) throw Error("cli", "covariate index is 1-based");
    s.covariate = covariate - 1;
    s.horizon = horizon ? *horizon : default_horizon;
    s.estimand = parse_estimand(estimand);
    s.folds = folds;
    s.inner_folds = inner_folds;
    s.seed = seed;
    if (!learners.empty()) s.learners = learners_from_json(read_json_file(learners, "learner config"));
    s.cross_fit = !no_cross_fit;
    s.fast_theta_d = fast_theta_d;
    s.epsilon = epsilon;
    return s;
  }
};

json spec_json(const TargetSpec& s) {
  return {{"target", s.label()},
          {"horizon", s.horizon},
          {"estimand", s.estimand == Estimand::survival ? "survival" : "rmst"},
          {"folds", s.folds},
          {"inner_folds", s.inner_folds},
          {"cross_fit", s.cross_fit},
          {"fast_theta_d", s.fast_theta_d},
          {"epsilon", s.epsilon},
          {"learners", learners_to_json(s.learners)}};
}

int cmd_simulate(const std::string& dgp_path, std::size_t n, std::uint64_t seed, const std::string& out) {
  const auto dgp = load_dgp(dgp_path);
  const auto data = simulate(dgp, n, seed);
  std::ostringstream csv;
  write_csv(csv, data);
  write_text(out, csv.str());
  if (!out.empty() && out != "-") {
    const json config = {{"dgp", dgp_to_json(dgp)}, {"n", n}};
    write_text(out + ".manifest.json", manifest("simulate", config, seed).dump(2) + "\n");
  }
  std::cerr << "simulated n=" << n << " events=" << [&] {
    int e = 0;
    for (std::size_t i = 0; i < data.n(); ++i) e += data.event(i);
    return e;
  }() << "\n";
  return 0;
}

int cmd_estimate(const std::string& data_path, const std::string& dgp_path, std::size_t n, const TargetOptions& opt,
                 const std::string& out, const std::string& dump_eif) {
  if (data_path.empty() == dgp_path.empty()) throw Error("cli", "give exactly one of --data and --dgp-config");
  SurvivalDataset data;
  double default_horizon = 0.0;
  json source;
  if (!data_path.empty()) {
    data = load_csv(data_path);
    if (!opt.horizon) throw Error("cli", "--horizon is required with --data");
    source = {{"data", data_path}};
  } else {
    const auto dgp = load_dgp(dgp_path);
    data = simulate(dgp, n, derive_seed(opt.seed, 9));
    default_horizon = dgp.horizon;
    source = {{"dgp", dgp_to_json(dgp)}, {"n", n}};
  }
  std::ostringstream csv;
  write_csv(csv, data);
  source["data_hash"] = hex(fnv1a(csv.str()));

  const auto spec = opt.spec(default_horizon);
  const auto cf = cross_fit_nuisances(data, spec);
  const auto report = estimate_target(data, spec, cf);

  json j = report_to_json(report);
  json config = spec_json(spec);
  config["source"] = source;
  j["manifest"] = manifest("estimate", config, spec.seed);
  write_text(out, j.dump(2) + "\n");

  if (!dump_eif.empty()) {
    std::ostringstream e;
    e << "index,fold,eif\n";
    e << std::setprecision(17);
    for (std::size_t i = 0; i < report.eif.size(); ++i) {
      e << i + 1 << ',' << cf.plan.fold_of(i) + 1 << ',' << report.eif[i] << '\n';
    }
    write_text(dump_eif, e.str());
  }

  std::string line = "target=" + report.target + " point=" + fmt(report.point) + " se=" + fmt(report.se);
  if (report.p_value) line += " p=" + fmt(*report.p_value);
  if (report.psi_point) line += " psi=" + fmt(*report.psi_point);
  (out.empty() || out == "-" ? std::cerr : std::cout) << line << "\n";
  return 0;
}

int cmd_oracle(const std::string& dgp_path, const TargetOptions& opt, std::size_t draws, std::size_t inner,
               const std::string& out) {
  const auto dgp = load_dgp(dgp_path);
  const double t = opt.horizon ? *opt.horizon : dgp.horizon;
  const auto est = parse_estimand(opt.estimand);
  OracleOptions o;
  o.n_draws = draws;
  o.inner_draws = inner;
  o.seed = opt.seed;
  const auto l = to_zero_based(opt.subset, "subset");
  if (opt.covariate == 0) throw Error("cli", "covariate index is 1-based");
  const std::size_t j = opt.covariate - 1;

  json r;
  std::string label;
  auto put = [&](const char* key, const OracleResult& v) { r[key] = {{"value", v.value}, {"mc_se", v.mc_se}}; };
  double value = 0.0, mc_se = 0.0;
  if (opt.target == "ate") {
    const auto a = oracle_ate(dgp, t, est, o);
    put("ate", a);
    label = "ate";
    value = a.value;
    mc_se = a.mc_se;
  } else {
    TargetSpec s;
    s.kind = target_from_string(opt.target);
    s.subset = l;
    s.covariate = j;
    label = s.label();
    if (is_projection_target(s.kind)) {
      const auto p = oracle_omega(dgp, j, t, est, o);
      put("gamma", p.gamma);
      put("chi", p.chi);
      put("omega", p.omega);
      const auto& pick = s.kind == TargetKind::gamma_j ? p.gamma : s.kind == TargetKind::chi_j ? p.chi : p.omega;
      value = pick.value;
      mc_se = pick.mc_se;
    } else {
      const auto v = oracle_theta(dgp, l.empty() ? std::vector<std::size_t>{0} : l, t, est, o);
      put("theta_l", v.theta_l);
      put("theta_d", v.theta_d);
      if (s.kind == TargetKind::theta_d) {
        value = v.theta_d.value;
        mc_se = v.theta_d.mc_se;
      } else if (s.kind == TargetKind::theta_l) {
        value = v.theta_l.value;
        mc_se = v.theta_l.mc_se;
      } else {
        if (!(v.theta_d.value > 0.0)) throw DegenerateTarget("oracle", "theta_d is zero; psi is undefined");
        put("psi", v.psi);
        value = v.psi.value;
        mc_se = v.psi.mc_se;
        if (s.kind == TargetKind::zeta_l) {
          mc_se /= value * (1.0 - value);
          value = logit(value);
        }
      }
    }
  }
  r["target"] = label;
  r["value"] = value;
  r["mc_se"] = mc_se;
  r["n_draws"] = draws;
  const json config = {{"dgp", dgp_to_json(dgp)}, {"target", label},     {"horizon", t},
                       {"estimand", opt.estimand}, {"draws", draws}, {"inner_draws", inner}};
  r["manifest"] = manifest("oracle", config, opt.seed);
  write_text(out, r.dump(2) + "\n");
  (out.empty() || out == "-" ? std::cerr : std::cout)
      << "target=" << label << " value=" << fmt(value) << " mc_se=" << fmt(mc_se) << "\n";
  return 0;
}

struct ReplicateOptions {
  std::string preset = "smoke";
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> n;
  std::vector<std::string> methods;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> trees;
  std::optional<double> truth;
  std::size_t oracle_draws = 200000;
  std::string records;
};

int cmd_replicate(const ReplicateOptions& r, const std::string& dgp_path, const TargetOptions& t, CLI::App* app,
                  const std::string& out) {
  auto setup = preset(r.preset);
  if (!dgp_path.empty()) {
    setup.dgp = load_dgp(dgp_path);
    setup.target.horizon = setup.dgp.horizon;
  }
  if (app->count("--target")) setup.target.kind = target_from_string(t.target);
  if (app->count("--subset")) setup.target.subset = to_zero_based(t.subset, "subset");
  if (app->count("--covariate")) setup.target.covariate = t.covariate - 1;
  if (t.horizon) setup.target.horizon = *t.horizon;
  if (app->count("--estimand")) setup.target.estimand = parse_estimand(t.estimand);
  if (app->count("--folds")) setup.target.folds = t.folds;
  if (app->count("--inner-folds")) setup.target.inner_folds = t.inner_folds;
  if (r.reps) setup.reps = *r.reps;
  if (r.seed) setup.seed = *r.seed;
  if (!r.n.empty()) setup.sample_sizes = r.n;
  if (!r.methods.empty()) {
    setup.methods.clear();
    for (const auto& m : r.methods) setup.methods.push_back(Method::parse(m));
  }
  if (r.threads) setup.threads = *r.threads;
  if (r.trees) setup.forest_trees = *r.trees;

  double truth = 0.0;
  json truth_json;
  if (r.truth) {
    truth = *r.truth;
    truth_json = {{"value", truth}, {"source", "given"}};
  } else {
    OracleOptions o;
    o.n_draws = r.oracle_draws;
    o.seed = derive_seed(setup.seed, 77);
    const auto v = replication_truth(setup, o);
    truth = v.value;
    truth_json = {{"value", v.value}, {"mc_se", v.mc_se}, {"draws", o.n_draws}, {"source", "oracle"}};
  }

  const auto records = run_replications(setup, [](std::size_t done, std::size_t total) {
    if (done == total || done % 10 == 0) std::cerr << "\rreplications " << done << "/" << total << std::flush;
  });
  std::cerr << "\n";
  const auto rows = summarize(records, setup, truth);
  std::ostringstream csv;
  write_summary_csv(csv, rows);
  write_text(out, csv.str());

  if (!r.records.empty()) {
    std::ostringstream rc;
    rc << std::setprecision(10) << "n,rep,method,ok,point,se,ci_lo,ci_hi,zeta_psi,zeta_lo,zeta_hi,error\n";
    for (const auto& x : records) {
      std::string err = x.error;
      for (auto& c : err) {
        if (c == ',' || c == '\n') c = ';';
      }
      rc << x.n << ',' << x.rep + 1 << ',' << x.method << ',' << (x.ok ? 1 : 0) << ',' << x.point << ',' << x.se
         << ',' << x.ci[0] << ',' << x.ci[1] << ',';
      if (x.zeta_ok) {
        rc << x.zeta_psi << ',' << x.zeta_ci[0] << ',' << x.zeta_ci[1];
      } else {
        rc << ",,";
      }
      rc << ',' << err << '\n';
    }
    write_text(r.records, rc.str());
  }
  if (!out.empty() && out != "-") {
    json config = setup_to_json(setup);
    config["truth"] = truth_json;
    write_text(out + ".manifest.json", manifest("replicate", config, setup.seed).dump(2) + "\n");
  }
  if (failure_rate_exceeded(rows)) {
    std::cerr << "tevim: more than 5% of replications failed in at least one setting\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treatment-effect variable importance for censored survival data"};
  app.set_version_flag("--version", std::string(TEVIM_VERSION));
  app.require_subcommand(1);

  std::string data_path, dgp_path, out, dump_eif;
  std::size_t n = 1000;
  std::uint64_t sim_seed = 0;
  TargetOptions target;
  std::size_t draws = 1000000, inner = 2000;
  ReplicateOptions rep;

  auto* sim = app.add_subcommand("simulate", "draw a dataset from a Weibull-Cox design");
  sim->add_option("--dgp-config", dgp_path, "design JSON, or weibull-cox | weibull-cox-literal | null");
  sim->add_option("--n", n, "sample size");
  sim->add_option("--seed", sim_seed, "seed");
  sim->add_option("--out", out, "output CSV (default stdout)");

  auto* est = app.add_subcommand("estimate", "estimate a target with cross-fitted one-step estimators");
  est->add_option("--data", data_path, "input CSV (time,event,trt,x...)");
  est->add_option("--dgp-config", dgp_path, "simulate the data from this design instead");
  est->add_option("--n", n, "sample size when simulating");
  target.add(est);
  est->add_option("--out", out, "report JSON (default stdout)");
  est->add_option("--dump-eif", dump_eif, "write the centered influence values to this CSV");

  TargetOptions otarget;
  std::string odgp, oout;
  auto* orc = app.add_subcommand("oracle", "Monte Carlo ground truth for a design");
  orc->add_option("--dgp-config", odgp, "design JSON, or weibull-cox | weibull-cox-literal | null");
  otarget.add(orc);
  orc->add_option("--draws", draws, "outer Monte Carlo draws");
  orc->add_option("--inner-draws", inner, "inner draws for E(tau | X_-l)");
  orc->add_option("--out", oout, "result JSON (default stdout)");

  TargetOptions rtarget;
  std::string rdgp, rout;
  auto* rp = app.add_subcommand("replicate", "repeated simulation study");
  rp->add_option("--preset", rep.preset, "smoke | psi-correct | omega-correct | psi-forest | omega-null");
  rp->add_option("--dgp-config", rdgp, "override the preset design");
  rtarget.add(rp);
  rp->add_option("--reps", rep.reps, "replications per setting");
  rp->add_option("--n", rep.n, "sample sizes, comma separated")->delimiter(',');
  rp->add_option("--methods", rep.methods, "A-B[-CF] method names, comma separated")->delimiter(',');
  rp->add_option("--threads", rep.threads, "worker threads (default: hardware)");
  rp->add_option("--trees", rep.trees, "trees per forest");
  rp->add_option("--truth", rep.truth, "true target value (default: oracle)");
  rp->add_option("--oracle-draws", rep.oracle_draws, "oracle draws when --truth is not given");
  rp->add_option("--records", rep.records, "per-replication CSV");
  rp->add_option("--out", rout, "summary CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sim) return cmd_simulate(dgp_path, n, sim_seed, out);
    if (*est) return cmd_estimate(data_path, dgp_path, n, target, out, dump_eif);
    if (*orc) return cmd_oracle(odgp, otarget, draws, inner, oout);
    if (*rp) {
      if (rp->count("--seed")) rep.seed = rtarget.seed;
      return cmd_replicate(rep, rdgp, rtarget, rp, rout);
    }
  } catch (const DegenerateTarget& e) {
    std::cerr << "tevim: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "tevim: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
