// asub_cli: subspace | mse | perturb | bayes | validate
//
// Exit codes: 0 success, 2 when a bound or invariant check is violated, 1 on error.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "asub/asub.hpp"
#include "asub/harness/config.hpp"
#include "asub/harness/experiments.hpp"
#include "asub/harness/io.hpp"

namespace fs = std::filesystem;
using namespace asub;
using namespace asub::harness;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  unsigned threads = 0;
  std::string format = "csv";
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Run {
 public:
  Run(const std::string& command, const Options& o) : command_(command), started_(utc_now()) {
    if (o.config.empty()) throw ConfigError("--config is required");
    cfg_ = load_config(o.config);
    if (o.seed) cfg_.seed = *o.seed;
    threads_ = o.threads == 0 ? default_threads() : o.threads;
    format_ = o.format == "json" ? Format::Json : Format::Csv;
    dir_ = o.out;
    fs::create_directories(dir_);
  }

  const ExperimentConfig& config() const { return cfg_; }
  unsigned threads() const { return threads_; }
  Format format() const { return format_; }
  const fs::path& dir() const { return dir_; }

  void table(const std::string& stem, const Table& t) { outputs_.push_back(write_table(dir_, stem, t, format_)); }
  void csv(const std::string& stem, const Table& t) { outputs_.push_back(write_table(dir_, stem, t, Format::Csv)); }
  void text(const std::string& name, const std::string& body) {
    write_text(dir_ / name, body);
    outputs_.push_back(name);
  }
  void stage(const char* name) { stages_.push_back(name); }

  void finish() {
    text("config.json", to_json(cfg_).dump(2) + "\n");
    nlohmann::ordered_json m;
    m["command"] = command_;
    m["config_hash"] = hex64(config_hash(cfg_));
    m["toolkit_version"] = kToolkitVersion;
    m["started"] = started_;
    m["finished"] = utc_now();
    m["seed"] = cfg_.seed;
    if (const auto* q = std::get_if<QuadraticProblem>(&cfg_.problem)) m["w_seed"] = q->w_seed;
    nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
    for (const char* s : stages_) seeds[s] = hex64(stage_key(cfg_, s).value());
    m["stage_seeds"] = seeds;
    m["outputs"] = outputs_;
    write_text(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string started_;
  ExperimentConfig cfg_;
  unsigned threads_ = 1;
  Format format_ = Format::Csv;
  fs::path dir_;
  std::vector<std::string> outputs_;
  std::vector<const char*> stages_;
};

int cmd_subspace(Run& run) {
  run.stage("subspace");
  const SubspaceResult r = run_subspace(run.config(), run.threads());
  run.text("subspace.json", subspace_json(r, run.config().seed).dump(2) + "\n");
  Table t;
  t.header = {"index", "eigenvalue", "active"};
  for (Eigen::Index i = 0; i < r.subspace.n(); ++i) {
    t.add({static_cast<std::int64_t>(i + 1), r.subspace.eigenvalues()[i], i < r.subspace.k()});
  }
  run.table("eigenvalues", t);
  std::cout << "k = " << r.subspace.k() << " (M = " << r.m << ")\n";
  return 0;
}

int cmd_mse(Run& run) {
  run.stage("mse");
  const MseExperimentResult r = run_mse_experiment(run.config(), run.threads());
  // The plot script reads CSV, so the figure series are always written as CSV.
  run.csv("mse_fg_fgN", mse_table(r.rows, false));
  run.csv("mse_f_fgN", mse_table(r.rows, true));
  if (run.format() == Format::Json) {
    run.table("mse_fg_fgN", mse_table(r.rows, false));
    run.table("mse_f_fgN", mse_table(r.rows, true));
  }
  run.table("mse_verdicts", mse_verdict_table(r));
  run.text("plot_mse.py", mse_plot_script());
  nlohmann::ordered_json s;
  s["poincare_constant"] = r.poincare;
  s["k"] = r.k;
  s["inactive_sum"] = r.eigenvalues.tail(r.eigenvalues.size() - r.k).sum();
  if (r.expct_f_fg) s["expct_f_fg"] = *r.expct_f_fg;
  s["loglog_slope_fg_fgN"] = r.slope_fg_fgN.slope;
  s["cv_ratio_fg_fgN"] = r.cv_ratio;
  s["all_satisfied"] = r.all_satisfied;
  run.text("mse_summary.json", s.dump(2) + "\n");
  for (const auto& row : r.rows) {
    std::printf("N=%-4zu  E[MSE(f_g,f_gN)]=%.5g (bound %.5g)  E[MSE(f,f_gN)]=%.5g (bound %.5g)\n", row.n,
                row.fg_fgN.mean, row.fg_fgN.bound, row.f_fgN.mean, row.f_fgN.bound);
  }
  return r.all_satisfied ? 0 : 2;
}

int cmd_perturb(Run& run) {
  run.stage("perturb");
  const PerturbExperimentResult r = run_perturbation_experiment(run.config(), run.threads());
  run.table("perturb", perturb_table(r));
  for (const auto& row : r.rows) {
    std::printf("eps=%-7.1e N=%-4zu  |W-What|=%.3e  E[MSE(f,f_ghat)]=%.5g (bound %.5g)  "
                "E[MSE(f_ghat,f_ghatN)]=%.5g (bound %.5g)\n",
                row.eps, row.n, row.achieved, row.f_fghat.value, row.bound_f_fghat,
                row.fghat_fghatN.mean, row.fghat_fghatN.bound);
  }
  return r.all_satisfied ? 0 : 2;
}

int cmd_bayes(Run& run) {
  run.stage("bayes");
  const BayesExperimentResult r = run_bayes_experiment(run.config(), run.threads());
  run.table("bayes", bayes_table(r));
  run.table("mcmc_chain", chain_table(r.chain));
  run.text("bayes_summary.json", bayes_summary(r).dump(2) + "\n");
  std::printf("d_H(post, post_g)=%.4g (bound %.4g)  slope=%.3f  TV=%.4f  acceptance=%.3f\n", r.d_post_g,
              r.bound_gpert, r.slope_g_gN.slope, r.tv, r.chain.acceptance_rate);
  return r.all_satisfied ? 0 : 2;
}

int cmd_validate(Run& run) {
  run.stage("validate");
  run.stage("perturb");
  const auto checks = run_validate(run.config(), run.threads());
  run.table("validate", checks_table(checks));
  bool ok = true;
  for (const auto& c : checks) {
    std::printf("%-4s %s (%.3e)\n", c.passed ? "ok" : "FAIL", c.name.c_str(), c.value);
    ok = ok && c.passed;
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active-subspace ridge approximation toolkit"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"subspace", "estimate C, decompose it and report k"},
      {"mse", "MSE study of f_g and f_gN over N"},
      {"perturb", "perturbed-subspace study"},
      {"bayes", "desk-scale Bayesian study"},
      {"validate", "invariant suite"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "JSON config file")->required();
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    sub->add_option("--format", o.format, "table format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Run run(command, o);
    int code = 0;
    if (command == "subspace") code = cmd_subspace(run);
    else if (command == "mse") code = cmd_mse(run);
    else if (command == "perturb") code = cmd_perturb(run);
    else if (command == "bayes") code = cmd_bayes(run);
    else code = cmd_validate(run);
    run.finish();
    if (code == 2) std::cerr << "bound or invariant violated; see " << run.dir().string() << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
