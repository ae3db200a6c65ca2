#pragma once

// End-to-end experiments: the quadratic MSE study, the perturbation study, the
// desk-scale Bayesian study, and an invariant suite. Every stage draws from
// keyed substreams of the global seed, so outputs are independent of `threads`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "asub/asub.hpp"
#include "asub/harness/config.hpp"
#include "asub/harness/io.hpp"

namespace asub::harness {

inline constexpr const char* kToolkitVersion = "0.3.0";

/// Stage keys derived from the global seed.
inline StreamKey stage_key(const ExperimentConfig& c, const char* stage) {
  return StreamKey(c.seed).with(stage);
}

struct QuadraticBundle {
  GradientFunction gf;
  DistributionSpec dist;
  ActiveSubspace truth;
  Matrix a;
};

/// f(x) = 1/2 x^T A x with A = W Lambda^{1/2} W^T, W a seeded random orthogonal
/// matrix, Lambda = diag(10^e_i). The exact C = A^2 has eigenpairs (Lambda, W).
inline QuadraticBundle build_quadratic_problem(const QuadraticProblem& q) {
  if (static_cast<Eigen::Index>(q.spectrum_exponents.size()) != q.n) {
    throw ConfigError("spectrum length differs from n");
  }
  for (std::size_t i = 1; i < q.spectrum_exponents.size(); ++i) {
    if (q.spectrum_exponents[i] > q.spectrum_exponents[i - 1]) {
      throw ConfigError("spectrum must be descending");
    }
  }
  if (q.k < 1 || q.k >= q.n) throw ConfigError("k must satisfy 1 <= k < n");
  Vector lambda(q.n);
  for (Eigen::Index i = 0; i < q.n; ++i) {
    lambda[i] = std::pow(10.0, q.spectrum_exponents[static_cast<std::size_t>(i)]);
  }
  const Matrix w = random_orthogonal(q.n, StreamKey(q.w_seed));
  const Vector root = lambda.cwiseSqrt();
  Matrix a = w * root.asDiagonal() * w.transpose();
  a = 0.5 * (a + a.transpose());
  QuadraticForm form;
  form.a = a;
  form.b = Vector::Zero(q.n);
  form.basis = w;
  form.sqrt_spectrum = root;
  GradientFunction gf = GradientFunction::quadratic(std::move(form));
  Matrix c = w * lambda.asDiagonal() * w.transpose();
  c = 0.5 * (c + c.transpose());
  ActiveSubspace truth(std::move(c), Eigenpairs{lambda, w}, q.k);
  return {std::move(gf), DistributionSpec::standard_normal(q.n), std::move(truth), std::move(a)};
}

inline QuadraticBundle build_quadratic_problem(const ExperimentConfig& c) {
  const auto* q = std::get_if<QuadraticProblem>(&c.problem);
  if (q == nullptr) throw ConfigError("build_quadratic_problem: config problem is not quadratic_gaussian");
  return build_quadratic_problem(*q);
}

inline GradientFunction load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path.string());
  json j;
  try {
    in >> j;
    if (j.at("type").get<std::string>() != "quadratic") throw ConfigError("model type must be quadratic");
    QuadraticForm q;
    q.a = detail::to_matrix(j.at("A"));
    q.b = j.contains("b") ? detail::to_vector(j.at("b")) : Vector::Zero(q.a.rows());
    q.c = j.value("c", 0.0);
    return GradientFunction::quadratic(std::move(q));
  } catch (const json::exception& e) {
    throw ConfigError("model " + path.string() + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError("model " + path.string() + ": " + e.what());
  }
}

/// The function, density and subspace an experiment runs on.
struct Problem {
  GradientFunction gf;
  DistributionSpec dist;
  ActiveSubspace subspace;
  std::size_t m_used = 0;  // C samples; 0 when C is exact
};

inline std::size_t default_m(const ExperimentConfig& c, Eigen::Index n) {
  return c.subspace.m.value_or(100 * static_cast<std::size_t>(n));
}

/// Quadratic problems use their exact subspace; custom models estimate C from
/// M samples and split it with the configured strategy.
inline Problem resolve_problem(const ExperimentConfig& c, unsigned threads) {
  if (const auto* q = std::get_if<QuadraticProblem>(&c.problem)) {
    auto b = build_quadratic_problem(*q);
    return {std::move(b.gf), std::move(b.dist), std::move(b.truth), 0};
  }
  auto model = std::filesystem::path(std::get<CustomProblem>(c.problem).model);
  if (model.is_relative()) model = c.base_dir / model;
  GradientFunction gf = load_model(model);
  DistributionSpec dist = c.distribution ? distribution_from_json(*c.distribution, gf.dim())
                                         : DistributionSpec::standard_normal(gf.dim());
  const std::size_t m = default_m(c, gf.dim());
  const Matrix chat = estimate_C(gf, dist, m, stage_key(c, "subspace"), threads);
  return {std::move(gf), std::move(dist), ActiveSubspace::from_matrix(chat, c.subspace.k_strategy), m};
}

/// E[(f - f_g)^2] in closed form for quadratic f under the standard normal:
/// 1/2 |B22|_F^2 + |B21|_F^2 + |b2|^2 with B = W^T A W, b2 = W2^T b.
inline std::optional<double> analytic_expct_f_fg(const GradientFunction& gf,
                                                 const DistributionSpec& dist, const Split& basis) {
  const QuadraticForm* q = gf.quadratic_form();
  if (q == nullptr || !dist.is_gaussian()) return std::nullopt;
  const Eigen::Index k = basis.k(), m = basis.n() - k;
  Matrix bmat;
  if (q->basis && q->sqrt_spectrum && *q->basis == basis.w()) bmat = q->sqrt_spectrum->asDiagonal();
  else bmat = basis.w().transpose() * q->a * basis.w();
  const Vector b2 = basis.w2().transpose() * q->b;
  return 0.5 * bmat.bottomRightCorner(m, m).squaredNorm() + bmat.bottomLeftCorner(m, k).squaredNorm() +
         b2.squaredNorm();
}

// ---------------------------------------------------------------- MSE study

struct MseRow {
  std::size_t n = 0;
  MseReport fg_fgN;  // MSE(f_g, f_{g_N})
  MseReport f_fgN;   // MSE(f, f_{g_N})
};

struct MseExperimentResult {
  std::vector<MseRow> rows;
  double poincare = 1.0;
  Vector eigenvalues;
  Eigen::Index k = 1;
  std::optional<double> expct_f_fg;
  LogLogFit slope_fg_fgN;
  double cv_ratio = 0.0;  // max/min CV(MSE(f_g, f_{g_N})) over N
  bool all_satisfied = true;
};

inline MseExperimentResult run_mse_experiment(const ExperimentConfig& c, unsigned threads) {
  Problem p = resolve_problem(c, threads);
  MseExperimentResult out;
  out.poincare = poincare_constant(p.dist, p.subspace.w2()).value;
  out.eigenvalues = p.subspace.eigenvalues();
  out.k = p.subspace.k();
  out.expct_f_fg = analytic_expct_f_fg(p.gf, p.dist, p.subspace.basis());
  const StreamKey key = stage_key(c, "mse");
  const RidgeApprox base(p.gf, p.dist, p.subspace.basis());
  std::vector<double> ns, means, cvs;
  for (std::size_t n : c.mse.n_list) {
    const RidgeApprox ridge = base.with_samples(n);
    const StreamKey nkey = key.with(n);
    const std::uint64_t rseed = nkey.with("realizations").value();
    const std::vector<PointFn> fas{[&](const Vector& x) { return ridge.f_g(x); },
                                   [&](const Vector& x) { return p.gf.value(x); }};
    const RealizedFn fb = [&](const Vector& x, std::uint64_t r) {
      return ridge.f_gN(x, Realization{rseed, r});
    };
    MseStudyOptions opts{c.mse.n_x, c.mse.n_z, c.mse.shared_batch, threads};
    auto reports = expected_mse_study(fas, fb, p.dist, opts, nkey);
    BoundInputs b{out.poincare, out.eigenvalues, out.k, static_cast<double>(n), 0.0};
    MseRow row{n, reports[0], reports[1]};
    row.fg_fgN.n = row.f_fgN.n = n;
    row.fg_fgN.bound = bound_var_mc(b);
    row.f_fgN.bound = bound_mse_f_fgN(b);
    if (out.expct_f_fg) {
      row.fg_fgN.identity_prediction = *out.expct_f_fg / static_cast<double>(n);
      row.f_fgN.identity_prediction = *out.expct_f_fg * (1.0 + 1.0 / static_cast<double>(n));
    }
    row.fg_fgN.satisfied = check_bound(row.fg_fgN, row.fg_fgN.bound).satisfied;
    row.f_fgN.satisfied = check_bound(row.f_fgN, row.f_fgN.bound).satisfied;
    out.all_satisfied = out.all_satisfied && row.fg_fgN.satisfied && row.f_fgN.satisfied;
    ns.push_back(static_cast<double>(n));
    means.push_back(row.fg_fgN.mean);
    cvs.push_back(row.fg_fgN.cv);
    out.rows.push_back(std::move(row));
  }
  if (ns.size() >= 2 && std::all_of(means.begin(), means.end(), [](double v) { return v > 0.0; })) {
    out.slope_fg_fgN = fit_loglog(ns, means);
  }
  if (!cvs.empty()) {
    const auto [lo, hi] = std::minmax_element(cvs.begin(), cvs.end());
    out.cv_ratio = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  }
  return out;
}

inline Table mse_table(const std::vector<MseRow>& rows, bool full_series) {
  Table t;
  t.header = {"N", "R", "N_x", "mean", "std", "cv", "bound", "identity_prediction", "satisfied"};
  for (const auto& row : rows) {
    const MseReport& r = full_series ? row.f_fgN : row.fg_fgN;
    t.add({static_cast<std::int64_t>(r.n), static_cast<std::int64_t>(r.realizations),
           static_cast<std::int64_t>(r.n_x), r.mean, r.std, r.cv, r.bound,
           r.identity_prediction.value_or(std::numeric_limits<double>::quiet_NaN()), r.satisfied});
  }
  return t;
}

inline Table mse_verdict_table(const MseExperimentResult& res) {
  Table t;
  t.header = {"quantity", "N", "mean", "std_error", "bound", "slack", "satisfied"};
  for (const auto& row : res.rows) {
    for (const auto* r : {&row.fg_fgN, &row.f_fgN}) {
      const Verdict v = check_bound(*r, r->bound);
      t.add({std::string(r == &row.fg_fgN ? "mse_fg_fgN" : "mse_f_fgN"),
             static_cast<std::int64_t>(row.n), r->mean, r->std_error, r->bound, v.slack,
             v.satisfied});
    }
  }
  return t;
}

/// Columns the plot script reads from both MSE tables.
inline const std::vector<std::string>& plot_columns() {
  static const std::vector<std::string> cols{"N", "mean", "cv", "bound", "identity_prediction"};
  return cols;
}

inline std::string mse_plot_script() {
  return R"PY(#!/usr/bin/env python3
# Two panels: mean MSE vs N (log-log) with bound and identity lines; CV vs N.
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

COLUMNS = ["N", "mean", "cv", "bound", "identity_prediction"]


def load(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = [c for c in COLUMNS if rows and c not in rows[0]]
    if missing:
        sys.exit(f"{path}: missing columns {missing}")
    return {c: [float(r[c]) for r in rows] for c in COLUMNS}


fg = load("mse_fg_fgN.csv")
f = load("mse_f_fgN.csv")
fig, (left, right) = plt.subplots(1, 2, figsize=(11, 4))
left.loglog(fg["N"], fg["mean"], "o-", label="E[MSE(f_g, f_gN)]")
left.loglog(fg["N"], fg["bound"], "--", label="bound (C/N) sum inactive")
left.loglog(fg["N"], fg["identity_prediction"], ":", label="identity E[(f-f_g)^2]/N")
left.loglog(f["N"], f["mean"], "s-", label="E[MSE(f, f_gN)]")
left.loglog(f["N"], f["bound"], "--", label="bound C(1+N^-1/2)^2 sum inactive")
left.set_xlabel("N")
left.set_ylabel("mean squared error")
left.legend(fontsize=7)
right.semilogx(fg["N"], fg["cv"], "o-", label="CV(MSE(f_g, f_gN))")
right.semilogx(f["N"], f["cv"], "s-", label="CV(MSE(f, f_gN))")
right.set_xlabel("N")
right.set_ylabel("coefficient of variation")
right.legend(fontsize=7)
fig.tight_layout()
fig.savefig("mse.png", dpi=150)
)PY";
}

// ------------------------------------------------------- perturbation study

struct PerturbRow {
  double eps = 0.0;
  double achieved = 0.0;  // |W - W-hat|_2
  double orthogonality = 0.0;
  PerturbationLemma lemma;
  MseEstimate f_fghat;
  double bound_f_fghat = 0.0;
  bool f_fghat_satisfied = true;
  std::size_t n = 0;
  MseReport fghat_fghatN;  // bound = bound_var_mc_pert
};

struct PerturbExperimentResult {
  std::vector<PerturbRow> rows;
  bool all_satisfied = true;
};

inline PerturbExperimentResult run_perturbation_experiment(const ExperimentConfig& c, unsigned threads) {
  Problem p = resolve_problem(c, threads);
  const double poincare = poincare_constant(p.dist, p.subspace.w2()).value;
  const StreamKey key = stage_key(c, "perturb");
  PerturbExperimentResult out;
  for (std::size_t ei = 0; ei < c.perturb.eps.size(); ++ei) {
    const double eps = c.perturb.eps[ei];
    const StreamKey ekey = key.with(ei);
    std::optional<PerturbedSubspace> pert;
    if (eps > 0.0) pert = perturb(p.subspace, eps, ekey);
    const Split& hat = pert ? pert->basis() : p.subspace.basis();
    const RidgeApprox base(p.gf, p.dist, hat);
    Rng xr(ekey.with("f-fghat"));
    const MseEstimate f_fghat =
        mse([&](const Vector& x) { return p.gf.value(x); }, [&](const Vector& x) { return base.f_g(x); },
            p.dist, c.perturb.n_x * c.perturb.n_z, xr);
    for (std::size_t n : c.perturb.n_list) {
      PerturbRow row;
      row.eps = eps;
      row.achieved = pert ? pert->achieved() : 0.0;
      row.orthogonality = orthogonality_defect(hat.w());
      row.lemma = check_perturbation_lemma(p.subspace.basis(), hat);
      row.f_fghat = f_fghat;
      row.n = n;
      BoundInputs b{poincare, p.subspace.eigenvalues(), p.subspace.k(), static_cast<double>(n), eps};
      row.bound_f_fghat = bound_f_fghat(b);
      row.f_fghat_satisfied = check_bound(f_fghat, row.bound_f_fghat).satisfied;
      const RidgeApprox ridge = base.with_samples(n);
      const StreamKey nkey = ekey.with(n);
      const std::uint64_t rseed = nkey.with("realizations").value();
      MseStudyOptions opts{c.perturb.n_x, c.perturb.n_z, false, threads};
      row.fghat_fghatN = expected_mse_study(
          [&](const Vector& x) { return ridge.f_g(x); },
          [&](const Vector& x, std::uint64_t r) { return ridge.f_gN(x, Realization{rseed, r}); },
          p.dist, opts, nkey);
      row.fghat_fghatN.n = n;
      row.fghat_fghatN.bound = bound_var_mc_pert(b);
      row.fghat_fghatN.satisfied = check_bound(row.fghat_fghatN, row.fghat_fghatN.bound).satisfied;
      const bool geometric = row.orthogonality <= 1e-10 && row.achieved <= eps + 1e-15 &&
                             row.lemma.holds(eps);
      out.all_satisfied = out.all_satisfied && geometric && row.f_fghat_satisfied &&
                          row.fghat_fghatN.satisfied;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

inline Table perturb_table(const PerturbExperimentResult& res) {
  Table t;
  t.header = {"eps", "achieved_distance", "orthogonality_defect", "norm_W1t_What2",
              "norm_What2t_W1", "norm_W2t_What2", "mse_f_fghat", "mse_f_fghat_std_error",
              "bound_f_fghat", "f_fghat_satisfied", "N", "R", "N_x", "mean_mse_fghat_fghatN",
              "std_mse_fghat_fghatN", "cv_mse_fghat_fghatN", "bound_var_mc_pert",
              "fghat_fghatN_satisfied"};
  for (const auto& r : res.rows) {
    t.add({r.eps, r.achieved, r.orthogonality, r.lemma.w1t_what2, r.lemma.what2t_w1,
           r.lemma.w2t_what2, r.f_fghat.value, r.f_fghat.std_error, r.bound_f_fghat,
           r.f_fghat_satisfied, static_cast<std::int64_t>(r.n),
           static_cast<std::int64_t>(r.fghat_fghatN.realizations),
           static_cast<std::int64_t>(r.fghat_fghatN.n_x), r.fghat_fghatN.mean, r.fghat_fghatN.std,
           r.fghat_fghatN.cv, r.fghat_fghatN.bound, r.fghat_fghatN.satisfied});
  }
  return t;
}

// ----------------------------------------------------------- Bayesian study

struct BayesRow {
  std::size_t n = 0;
  std::size_t realizations = 0;
  double mean_g_gN = 0.0;  // E[d_H(post_g, post_gN)]
  double std_g_gN = 0.0;
  double se_g_gN = 0.0;
  double bound_g_gN = 0.0;
  bool g_gN_satisfied = true;
  double mean_post_gN = 0.0;  // E[d_H(post, post_gN)]
  double se_post_gN = 0.0;
  double bound_total = 0.0;
  bool total_satisfied = true;
  bool total_is_sum = true;  // bound_total == bound_gpert + bound_gpert_gpertN
};

struct BayesExperimentResult {
  Eigen::Index k = 1;
  Vector eigenvalues;
  Matrix w;
  double poincare = 1.0;
  LEstimate l;
  double z_exact_grid = 0.0;
  double z_g_grid = 0.0;
  Estimate z_exact_mc;
  Estimate z_g_mc;
  double d_post_g = 0.0;  // d_H(post, post_g) on the grid
  double bound_gpert = 0.0;
  bool gpert_satisfied = true;
  std::vector<BayesRow> rows;
  LogLogFit slope_g_gN;
  ChainRecord chain;
  double tv = 0.0;
  double tv_lo = 0.0, tv_hi = 0.0;
  bool all_satisfied = true;
};

/// Active-marginal density of the G-ridge posterior, exp(-g(y)) phi(y), on a line (k = 1).
inline double active_target_1d(const RidgeApprox& ridge, double y) {
  Vector v(1);
  v[0] = y;
  return std::exp(-ridge.g(v) - 0.5 * y * y);
}

inline BayesExperimentResult run_bayes_experiment(const ExperimentConfig& c, unsigned threads) {
  const auto& bc = c.bayes;
  const Eigen::Index n = bc.g.cols();
  const DistributionSpec prior = DistributionSpec::standard_normal(n);
  const PosteriorSpec ps = PosteriorSpec::linear(prior, bc.g, bc.d, bc.gamma);
  const GradientFunction misfit = ps.misfit_function();
  const QuadraticForm& q = *misfit.quadratic_form();
  // grad f = A x + b with x ~ N(0, I): C = A^2 + b b^T.
  Matrix cmat = q.a * q.a + q.b * q.b.transpose();
  cmat = 0.5 * (cmat + cmat.transpose());
  const ActiveSubspace sub = ActiveSubspace::from_matrix(cmat, c.subspace.k_strategy);
  const StreamKey key = stage_key(c, "bayes");

  BayesExperimentResult out;
  out.k = sub.k();
  out.eigenvalues = sub.eigenvalues();
  out.w = sub.w();
  out.poincare = poincare_constant(prior, sub.w2()).value;

  const RidgeApprox ridge(misfit, prior, sub.basis());
  const PosteriorVariant exact = PosteriorVariant::exact(ps);
  const PosteriorVariant post_g = PosteriorVariant::ridge(PosteriorVariant::Kind::GRidge, prior, ridge);

  GridSpec grid = bc.grid;
  grid.validate();
  const double cell = grid.cell_volume();
  const auto p_exact = evaluate_on_grid([&](const Vector& x) { return unnormalized_posterior(exact, x); },
                                        grid, threads);
  const auto p_g = evaluate_on_grid([&](const Vector& x) { return unnormalized_posterior(post_g, x); },
                                    grid, threads);
  for (std::size_t i = 0; i < p_exact.size(); ++i) {
    out.z_exact_grid += p_exact[i] * cell;
    out.z_g_grid += p_g[i] * cell;
  }
  out.z_exact_mc = normalizing_constant(exact, bc.m, key.with("z-exact"));
  out.z_g_mc = normalizing_constant(post_g, bc.m, key.with("z-g"));
  out.d_post_g = hellinger_from_grid(p_exact, p_g, cell);
  out.l = estimate_L([&](const Vector& x) { return ps.misfit(x); }, prior, bc.m, key.with("L"));
  const HellingerBoundInputs hb{BoundInputs{out.poincare, out.eigenvalues, out.k, 1.0, 0.0}, out.l.l};
  out.bound_gpert = hellinger_bound_gpert(hb);
  out.gpert_satisfied = out.d_post_g <= out.bound_gpert;
  out.all_satisfied = out.gpert_satisfied;

  std::vector<double> ns, means;
  for (std::size_t nn : bc.n_list) {
    const RidgeApprox rn = ridge.with_samples(nn);
    const std::uint64_t rseed = key.with("realizations").with(nn).value();
    std::vector<double> d_g(bc.realizations), d_post(bc.realizations);
    parallel_for(bc.realizations, threads, [&](std::size_t r) {
      const Realization real{rseed, r};
      const auto q_n = evaluate_on_grid(
          [&](const Vector& x) { return std::exp(-rn.f_gN(x, real)) * density(prior, x); }, grid, 1);
      d_g[r] = hellinger_from_grid(p_g, q_n, cell);
      d_post[r] = hellinger_from_grid(p_exact, q_n, cell);
    });
    BayesRow row;
    row.n = nn;
    row.realizations = bc.realizations;
    asub::detail::RunningStats sg, sp;
    for (std::size_t r = 0; r < bc.realizations; ++r) {
      sg.push(d_g[r]);
      sp.push(d_post[r]);
    }
    const double rr = static_cast<double>(bc.realizations);
    row.mean_g_gN = sg.mean;
    row.std_g_gN = std::sqrt(sg.variance());
    row.se_g_gN = row.std_g_gN / std::sqrt(rr);
    row.mean_post_gN = sp.mean;
    row.se_post_gN = std::sqrt(sp.variance() / rr);
    row.bound_g_gN = hellinger_bound_gpert_gpertN(hb, static_cast<double>(nn));
    row.bound_total = hellinger_bound_total(hb, static_cast<double>(nn));
    row.total_is_sum = row.bound_total == out.bound_gpert + row.bound_g_gN;
    row.g_gN_satisfied = check_bound(row.mean_g_gN, row.se_g_gN, row.bound_g_gN).satisfied;
    row.total_satisfied = check_bound(row.mean_post_gN, row.se_post_gN, row.bound_total).satisfied;
    out.all_satisfied = out.all_satisfied && row.g_gN_satisfied && row.total_satisfied && row.total_is_sum;
    ns.push_back(static_cast<double>(nn));
    means.push_back(row.mean_g_gN);
    out.rows.push_back(row);
  }
  if (ns.size() >= 2 && std::all_of(means.begin(), means.end(), [](double v) { return v > 0.0; })) {
    out.slope_g_gN = fit_loglog(ns, means);
  }

  // Metropolis-Hastings on the active variable of the G-ridge posterior.
  out.chain = metropolis_hastings_active([&](const Vector& y) { return ridge.g(y); },
                                         Vector::Zero(out.k), bc.mcmc, key.with("mcmc"),
                                         &ridge.sampler());
  if (out.k == 1 && out.chain.retained() > 0) {
    // Locate the bulk of the target on a wide line grid, then compare histograms on mean +- 6 sd.
    constexpr int kLine = 20000;
    double mass = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < kLine; ++i) {
      const double y = -12.0 + 24.0 * (i + 0.5) / kLine;
      const double w = active_target_1d(ridge, y);
      mass += w;
      m1 += w * y;
      m2 += w * y * y;
    }
    const double mean = m1 / mass;
    const double sd = std::sqrt(std::max(m2 / mass - mean * mean, 1e-300));
    out.tv_lo = mean - 6.0 * sd;
    out.tv_hi = mean + 6.0 * sd;
    std::vector<double> ys;
    ys.reserve(out.chain.retained());
    for (const auto& y : out.chain.retained_states()) ys.push_back(y[0]);
    out.tv = tv_distance_histogram(ys, [&](double y) { return active_target_1d(ridge, y); }, out.tv_lo,
                                   out.tv_hi, bc.tv_bins);
  }
  return out;
}

inline Table bayes_table(const BayesExperimentResult& res) {
  Table t;
  t.header = {"N", "R", "mean_dH_g_gN", "std_dH_g_gN", "se_dH_g_gN", "bound_gpert_gpertN",
              "g_gN_satisfied", "mean_dH_post_gN", "se_dH_post_gN", "bound_total", "total_satisfied"};
  for (const auto& r : res.rows) {
    t.add({static_cast<std::int64_t>(r.n), static_cast<std::int64_t>(r.realizations), r.mean_g_gN,
           r.std_g_gN, r.se_g_gN, r.bound_g_gN, r.g_gN_satisfied, r.mean_post_gN, r.se_post_gN,
           r.bound_total, r.total_satisfied});
  }
  return t;
}

inline Table chain_table(const ChainRecord& chain) {
  Table t;
  t.header.push_back("step");
  const Eigen::Index k = chain.states.empty() ? 0 : chain.states.front().size();
  for (Eigen::Index i = 0; i < k; ++i) t.header.push_back("y" + std::to_string(i + 1));
  t.header.push_back("misfit");
  t.header.push_back("accepted");
  for (std::size_t s = 0; s < chain.states.size(); ++s) {
    std::vector<Cell> row{static_cast<std::int64_t>(s)};
    for (Eigen::Index i = 0; i < k; ++i) row.emplace_back(chain.states[s][i]);
    row.emplace_back(chain.misfits[s]);
    row.emplace_back(static_cast<std::int64_t>(chain.accepted[s]));
    t.add(std::move(row));
  }
  return t;
}

inline nlohmann::ordered_json bayes_summary(const BayesExperimentResult& r) {
  nlohmann::ordered_json j;
  j["k"] = r.k;
  j["eigenvalues"] = std::vector<double>(r.eigenvalues.data(), r.eigenvalues.data() + r.eigenvalues.size());
  j["poincare_constant"] = r.poincare;
  j["L"] = r.l.l;
  j["L_std_error"] = r.l.l_std_error;
  j["Z"] = {{"exact_grid", r.z_exact_grid},
            {"g_grid", r.z_g_grid},
            {"exact_prior_mc", r.z_exact_mc.value},
            {"exact_prior_mc_std_error", r.z_exact_mc.std_error},
            {"g_prior_mc", r.z_g_mc.value},
            {"g_prior_mc_std_error", r.z_g_mc.std_error}};
  j["mean_misfit_prior"] = r.l.mean_misfit.value;
  j["hellinger_post_g"] = r.d_post_g;
  j["bound_gpert"] = r.bound_gpert;
  j["gpert_satisfied"] = r.gpert_satisfied;
  j["slope_dH_g_gN"] = r.slope_g_gN.slope;
  j["mcmc"] = {{"steps", r.chain.states.size()},
               {"burn_in", r.chain.burn_in},
               {"acceptance_rate", r.chain.acceptance_rate},
               {"autocorrelation_time", r.chain.autocorrelation_time},
               {"tv_distance", r.tv},
               {"tv_range", {r.tv_lo, r.tv_hi}}};
  j["all_satisfied"] = r.all_satisfied;
  return j;
}

// -------------------------------------------------------- subspace command

struct SubspaceResult {
  ActiveSubspace subspace;
  std::size_t m = 0;
};

/// Estimates C from M samples of the configured problem and splits it.
inline SubspaceResult run_subspace(const ExperimentConfig& c, unsigned threads) {
  if (const auto* q = std::get_if<QuadraticProblem>(&c.problem)) {
    auto b = build_quadratic_problem(*q);
    const std::size_t m = default_m(c, q->n);
    const Matrix chat = estimate_C(b.gf, b.dist, m, stage_key(c, "subspace"), threads);
    return {ActiveSubspace::from_matrix(chat, c.subspace.k_strategy), m};
  }
  Problem p = resolve_problem(c, threads);
  return {std::move(p.subspace), p.m_used};
}

inline nlohmann::ordered_json subspace_json(const SubspaceResult& r, std::uint64_t seed) {
  nlohmann::ordered_json j;
  const auto& s = r.subspace;
  j["n"] = s.n();
  j["k"] = s.k();
  j["eigenvalues"] = std::vector<double>(s.eigenvalues().data(), s.eigenvalues().data() + s.n());
  nlohmann::ordered_json w = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(s.n()));
    for (Eigen::Index col = 0; col < s.n(); ++col) row[static_cast<std::size_t>(col)] = s.w()(i, col);
    w.push_back(row);
  }
  j["W"] = w;
  j["seed"] = seed;
  j["M"] = r.m;
  return j;
}

// ---------------------------------------------------------- invariant suite

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

/// Fast invariant checks on the configured problem.
inline std::vector<Check> run_validate(const ExperimentConfig& c, unsigned threads) {
  std::vector<Check> checks;
  auto add = [&](std::string name, double value, double tol, bool passed) {
    checks.push_back({std::move(name), value, tol, passed});
  };
  Problem p = resolve_problem(c, threads);
  const StreamKey key = stage_key(c, "validate");
  const GradientCheck gc = validate_gradient(p.gf, p.dist, key);
  add("gradient_finite_differences", gc.worst_error, 0.0, gc.passed);
  const auto& s = p.subspace;
  add("orthogonality", orthogonality_defect(s.w()), 1e-10, orthogonality_defect(s.w()) <= 1e-10);
  const double recon_tol = 1e-8 * (1.0 + max_abs(s.c_hat()));
  add("reconstruction", s.reconstruction_error(), recon_tol, s.reconstruction_error() <= recon_tol);
  const Eigen::Index gap_k = choose_k(s.eigenvalues(), LargestGap{});
  add("largest_gap_k", static_cast<double>(gap_k), static_cast<double>(s.k()), gap_k == s.k());
  double sens = 0.0;
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    const double li = s.w().col(i).dot(s.c_hat() * s.w().col(i));
    sens = std::max(sens, std::abs(li - s.eigenvalues()[i]) / std::max(1.0, s.eigenvalues()[i]));
  }
  add("eigenvalue_sensitivity", sens, 1e-8, sens <= 1e-8);
  Rng rng(key.with("points"));
  double round_trip = 0.0, ridge_form = 0.0;
  const RidgeApprox ridge(p.gf, p.dist, s.basis());
  for (int i = 0; i < 100; ++i) {
    const Vector x = sample_one(p.dist, rng);
    const auto [y, z] = coords(s.basis(), x);
    round_trip = std::max(round_trip, (reconstruct(s.basis(), y, z) - x).cwiseAbs().maxCoeff());
    const double fx = p.gf.value(x);
    ridge_form = std::max(ridge_form, std::abs(ridge.f_lifted(y, z) - fx) / std::max(1.0, std::abs(fx)));
  }
  add("coords_round_trip", round_trip, 1e-10, round_trip <= 1e-10);
  add("lifted_evaluation", ridge_form, 1e-8, ridge_form <= 1e-8);
  for (std::size_t ei = 0; ei < c.perturb.eps.size(); ++ei) {
    const double eps = c.perturb.eps[ei];
    if (eps <= 0.0) continue;
    const PerturbedSubspace ps = perturb(s, eps, stage_key(c, "perturb").with(ei));
    const bool ok = orthogonality_defect(ps.w_hat()) <= 1e-10 && ps.achieved() <= eps &&
                    ps.achieved() >= 0.9 * eps && ps.lemma().holds(eps);
    add("perturbation_lemma_eps_" + format_double(eps), ps.achieved(), eps, ok);
  }
  return checks;
}

inline Table checks_table(const std::vector<Check>& checks) {
  Table t;
  t.header = {"check", "value", "tolerance", "passed"};
  for (const auto& ch : checks) t.add({ch.name, ch.value, ch.tolerance, ch.passed});
  return t;
}

}  // namespace asub::harness
