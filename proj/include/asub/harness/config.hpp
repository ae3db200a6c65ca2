#pragma once

// JSON experiment configuration. Schema (all sections optional except seed/problem):
//
//   {
//     "seed": 20240611,
//     "problem": {"type": "quadratic_gaussian", "n": 10, "k": 2,
//                 "spectrum_exponents": [4, 3.8, 2, ...], "w_seed": 7}
//              | {"type": "custom", "model": "model.json"},
//     "distribution": {"kind": "standard_normal"}
//                   | {"kind": "uniform_box", "lo": [...], "hi": [...]}
//                   | {"kind": "uniform_ball", "center": [...], "radius": r},
//     "subspace": {"M": 1000, "k_strategy": "largest_gap" | {"manual": 2} | {"threshold": 10}},
//     "mse": {"N": [...], "N_x": 10000, "N_z": 1000, "shared_batch": false},
//     "perturb": {"eps": [...], "N": [...], "N_x": 2000, "N_z": 200},
//     "bayes": {"G": [[...]], "d": [...], "gamma": [[...]],
//               "grid": {"lo": [...], "hi": [...], "points": 400},
//               "N": [...], "realizations": 200, "M": 100000, "tv_bins": 40,
//               "mcmc": {"T": 100000, "B": 1000, "s": 1.0}}
//   }
//
// A custom model file holds {"type": "quadratic", "A": [[...]], "b": [...], "c": 0}.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "asub/bayes.hpp"
#include "asub/errors.hpp"
#include "asub/linalg.hpp"
#include "asub/prob_model.hpp"
#include "asub/subspace.hpp"

namespace asub::harness {

using json = nlohmann::json;

struct QuadraticProblem {
  Eigen::Index n = 10;
  Eigen::Index k = 2;
  std::vector<double> spectrum_exponents{4.0, 3.8, 2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25};
  std::uint64_t w_seed = 7;
};

struct CustomProblem {
  std::string model;
};

struct MseSection {
  std::vector<std::size_t> n_list{2, 5, 10, 20, 50, 100};
  std::size_t n_x = 10'000;
  std::size_t n_z = 1'000;
  bool shared_batch = false;
};

struct PerturbSection {
  std::vector<double> eps{1e-3, 1e-2, 1e-1};
  std::vector<std::size_t> n_list{10, 100};
  std::size_t n_x = 2'000;
  std::size_t n_z = 200;
};

struct SubspaceSection {
  std::optional<std::size_t> m;  // default 100 * n
  KStrategy k_strategy = LargestGap{};
};

struct BayesSection {
  Matrix g;
  Vector d;
  Matrix gamma;
  GridSpec grid;
  std::vector<std::size_t> n_list{2, 8, 32, 128};
  std::size_t realizations = 200;
  std::size_t m = 100'000;
  int tv_bins = 40;
  MhOptions mcmc{1.0, 100'000, 1'000, true};

  static BayesSection desk_default() {
    BayesSection b;
    const double c = std::cos(0.5), s = std::sin(0.5);
    Matrix rot(2, 2);
    rot << c, -s, s, c;
    Vector sing(2);
    sing << 2.0, 0.5;
    b.g = rot * sing.asDiagonal() * rot.transpose();
    b.d = Vector(2);
    b.d << 1.0, -0.5;
    b.gamma = Matrix::Identity(2, 2);
    b.grid.lo = Vector::Constant(2, -6.0);
    b.grid.hi = Vector::Constant(2, 6.0);
    b.grid.points = 400;
    return b;
  }
};

struct ExperimentConfig {
  std::uint64_t seed = 20240611;
  std::variant<QuadraticProblem, CustomProblem> problem = QuadraticProblem{};
  std::optional<json> distribution;
  SubspaceSection subspace;
  MseSection mse;
  PerturbSection perturb;
  BayesSection bayes = BayesSection::desk_default();
  std::filesystem::path base_dir;  // resolves relative model paths; not serialized
};

namespace detail {

inline Vector to_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Matrix to_matrix(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ConfigError("matrix rows differ in length");
    for (std::size_t j2 = 0; j2 < rows[i].size(); ++j2) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j2)) = rows[i][j2];
    }
  }
  return m;
}

inline json from_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json from_matrix(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    out.push_back(row);
  }
  return out;
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline json k_strategy_to_json(const KStrategy& s) {
  if (std::holds_alternative<LargestGap>(s)) return "largest_gap";
  if (const auto* m = std::get_if<ManualK>(&s)) return json{{"manual", m->k}};
  return json{{"threshold", std::get<ThresholdRatio>(s).ratio}};
}

inline KStrategy k_strategy_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "largest_gap") return LargestGap{};
    throw ConfigError("unknown k_strategy " + j.get<std::string>());
  }
  if (j.contains("manual")) return ManualK{j.at("manual").get<Eigen::Index>()};
  if (j.contains("threshold")) return ThresholdRatio{j.at("threshold").get<double>()};
  throw ConfigError("k_strategy must be \"largest_gap\", {\"manual\": k} or {\"threshold\": r}");
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  if (const auto* q = std::get_if<QuadraticProblem>(&c.problem)) {
    j["problem"] = {{"type", "quadratic_gaussian"}, {"n", q->n}, {"k", q->k},
                    {"spectrum_exponents", q->spectrum_exponents}, {"w_seed", q->w_seed}};
  } else {
    j["problem"] = {{"type", "custom"}, {"model", std::get<CustomProblem>(c.problem).model}};
  }
  if (c.distribution) j["distribution"] = *c.distribution;
  json sub = {{"k_strategy", k_strategy_to_json(c.subspace.k_strategy)}};
  if (c.subspace.m) sub["M"] = *c.subspace.m;
  j["subspace"] = sub;
  j["mse"] = {{"N", c.mse.n_list}, {"N_x", c.mse.n_x}, {"N_z", c.mse.n_z},
              {"shared_batch", c.mse.shared_batch}};
  j["perturb"] = {{"eps", c.perturb.eps}, {"N", c.perturb.n_list}, {"N_x", c.perturb.n_x},
                  {"N_z", c.perturb.n_z}};
  const auto& b = c.bayes;
  j["bayes"] = {{"G", detail::from_matrix(b.g)},
                {"d", detail::from_vector(b.d)},
                {"gamma", detail::from_matrix(b.gamma)},
                {"grid", {{"lo", detail::from_vector(b.grid.lo)},
                          {"hi", detail::from_vector(b.grid.hi)},
                          {"points", b.grid.points}}},
                {"N", b.n_list},
                {"realizations", b.realizations},
                {"M", b.m},
                {"tv_bins", b.tv_bins},
                {"mcmc", {{"T", b.mcmc.steps}, {"B", b.mcmc.burn_in}, {"s", b.mcmc.step}}}};
  return j;
}

inline void validate(const ExperimentConfig& c) {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string(what) + " must be positive");
  };
  if (const auto* q = std::get_if<QuadraticProblem>(&c.problem)) {
    if (q->n < 2) throw ConfigError("problem.n must be at least 2");
    if (q->k < 1 || q->k >= q->n) throw ConfigError("problem.k must satisfy 1 <= k < n");
    if (static_cast<Eigen::Index>(q->spectrum_exponents.size()) != q->n) {
      throw ConfigError("problem.spectrum_exponents must have length n");
    }
    for (std::size_t i = 1; i < q->spectrum_exponents.size(); ++i) {
      if (q->spectrum_exponents[i] > q->spectrum_exponents[i - 1]) {
        throw ConfigError("problem.spectrum_exponents must be descending");
      }
    }
  } else if (std::get<CustomProblem>(c.problem).model.empty()) {
    throw ConfigError("problem.model must name a model file");
  }
  for (auto n : c.mse.n_list) positive(n, "mse.N entries");
  positive(c.mse.n_x, "mse.N_x");
  positive(c.mse.n_z, "mse.N_z");
  for (auto n : c.perturb.n_list) positive(n, "perturb.N entries");
  for (double e : c.perturb.eps) {
    if (!(e >= 0.0) || e >= 2.0) throw ConfigError("perturb.eps entries must lie in [0, 2)");
  }
  positive(c.perturb.n_x, "perturb.N_x");
  positive(c.perturb.n_z, "perturb.N_z");
  if (c.subspace.m) positive(*c.subspace.m, "subspace.M");
  const auto& b = c.bayes;
  if (b.g.rows() != b.d.size() || b.gamma.rows() != b.d.size() || b.gamma.cols() != b.d.size()) {
    throw ConfigError("bayes: G, d and gamma dimensions disagree");
  }
  if (b.grid.lo.size() != b.g.cols() || b.grid.hi.size() != b.g.cols()) {
    throw ConfigError("bayes.grid bounds must match the parameter dimension");
  }
  for (auto n : b.n_list) positive(n, "bayes.N entries");
  positive(b.realizations, "bayes.realizations");
  positive(b.m, "bayes.M");
  positive(b.mcmc.steps, "bayes.mcmc.T");
  if (b.mcmc.steps < b.mcmc.burn_in) throw ConfigError("bayes.mcmc.T must be at least B");
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    const json& p = j.at("problem");
    const auto type = p.at("type").get<std::string>();
    if (type == "quadratic_gaussian") {
      QuadraticProblem q;
      detail::read_if(p, "n", q.n);
      detail::read_if(p, "k", q.k);
      detail::read_if(p, "spectrum_exponents", q.spectrum_exponents);
      detail::read_if(p, "w_seed", q.w_seed);
      c.problem = q;
    } else if (type == "custom") {
      c.problem = CustomProblem{p.at("model").get<std::string>()};
    } else {
      throw ConfigError("unknown problem type " + type);
    }
    if (j.contains("distribution")) c.distribution = j.at("distribution");
    if (j.contains("subspace")) {
      const json& s = j.at("subspace");
      if (s.contains("M")) c.subspace.m = s.at("M").get<std::size_t>();
      if (s.contains("k_strategy")) c.subspace.k_strategy = k_strategy_from_json(s.at("k_strategy"));
    }
    if (j.contains("mse")) {
      const json& s = j.at("mse");
      detail::read_if(s, "N", c.mse.n_list);
      detail::read_if(s, "N_x", c.mse.n_x);
      detail::read_if(s, "N_z", c.mse.n_z);
      detail::read_if(s, "shared_batch", c.mse.shared_batch);
    }
    if (j.contains("perturb")) {
      const json& s = j.at("perturb");
      detail::read_if(s, "eps", c.perturb.eps);
      detail::read_if(s, "N", c.perturb.n_list);
      detail::read_if(s, "N_x", c.perturb.n_x);
      detail::read_if(s, "N_z", c.perturb.n_z);
    }
    if (j.contains("bayes")) {
      const json& s = j.at("bayes");
      auto& b = c.bayes;
      if (s.contains("G")) b.g = detail::to_matrix(s.at("G"));
      if (s.contains("d")) b.d = detail::to_vector(s.at("d"));
      if (s.contains("gamma")) b.gamma = detail::to_matrix(s.at("gamma"));
      if (s.contains("grid")) {
        const json& g = s.at("grid");
        if (g.contains("lo")) b.grid.lo = detail::to_vector(g.at("lo"));
        if (g.contains("hi")) b.grid.hi = detail::to_vector(g.at("hi"));
        detail::read_if(g, "points", b.grid.points);
      }
      detail::read_if(s, "N", b.n_list);
      detail::read_if(s, "realizations", b.realizations);
      detail::read_if(s, "M", b.m);
      detail::read_if(s, "tv_bins", b.tv_bins);
      if (s.contains("mcmc")) {
        const json& m = s.at("mcmc");
        detail::read_if(m, "T", b.mcmc.steps);
        detail::read_if(m, "B", b.mcmc.burn_in);
        detail::read_if(m, "s", b.mcmc.step);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  c.base_dir = path.parent_path();
  return c;
}

/// FNV-1a of the canonical (key-sorted, compact) config serialization.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  return asub::detail::fnv1a(to_json(c).dump());
}

inline DistributionSpec distribution_from_json(const json& j, Eigen::Index n) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "standard_normal") return DistributionSpec::standard_normal(n);
    if (kind == "uniform_box") {
      auto d = DistributionSpec::uniform_box(detail::to_vector(j.at("lo")), detail::to_vector(j.at("hi")));
      if (d.dim() != n) throw ConfigError("distribution dimension differs from the problem");
      return d;
    }
    if (kind == "uniform_ball") {
      auto d = DistributionSpec::uniform_ball(detail::to_vector(j.at("center")),
                                              j.at("radius").get<double>());
      if (d.dim() != n) throw ConfigError("distribution dimension differs from the problem");
      return d;
    }
    throw ConfigError("unknown distribution kind " + kind);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("distribution: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("distribution: ") + e.what());
  }
}

}  // namespace asub::harness
