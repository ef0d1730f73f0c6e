// Command line runner for twin experiments, parameter sweeps, the QMC study
// and the path space samplers.
#include "letf/config.hpp"
#include "letf/qmc.hpp"
#include "letf/smoother.hpp"
#include "letf/twin.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "INI configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "seed overriding run.seed");
  cmd->add_option("--out", args.out, "output directory")->capture_default_str();
}

letf::FileConfig load(const CommonArgs& args) {
  letf::FileConfig fc = args.config.empty() ? letf::parse_config("") : letf::load_config(args.config);
  if (args.seed) {
    fc.experiment.seed = *args.seed;
    fc.qmc.seed = *args.seed;
  }
  return fc;
}

void write(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw letf::Error("cannot write " + path.string());
  f << text;
}

int run_twin(const CommonArgs& args) {
  const letf::FileConfig fc = load(args);
  const letf::RunSummary s = letf::run_twin_experiment(fc.experiment, args.out);
  std::cout << letf::summary_text(s);
  return s.diverged ? 2 : 0;
}

int run_sweep(const CommonArgs& args) {
  const letf::FileConfig fc = load(args);
  const auto cells = letf::run_sweep(fc.experiment, fc.sweep);
  const std::filesystem::path out(args.out);
  write(out / "sweep.csv", letf::sweep_csv(cells));
  const letf::SweepCell best = letf::best_cell(cells);
  std::ostringstream os;
  os << std::setprecision(17) << "{\n  \"param1\": \"" << fc.sweep.param1 << "\",\n  \"param2\": \"" << fc.sweep.param2
     << "\",\n  \"best_param1\": " << best.param1 << ",\n  \"best_param2\": " << best.param2
     << ",\n  \"best_rmse\": " << best.rmse << ",\n  \"csv\": \"" << (out / "sweep.csv").string() << "\"\n}\n"
     << "# config\n" << fc.experiment.echo();
  write(out / "summary.txt", os.str());
  std::cout << os.str();
  return 0;
}

int run_qmc(const CommonArgs& args) {
  const letf::FileConfig fc = load(args);
  const letf::QmcResult r = letf::qmc_single_step_experiment(fc.qmc);
  const std::string table = letf::qmc_table_csv(r);
  write(std::filesystem::path(args.out) / "qmc.csv", table);
  std::cout << table;
  return 0;
}

int run_smoother(const CommonArgs& args) {
  const letf::FileConfig fc = load(args);
  const letf::SmootherConfig& sc = fc.smoother;
  letf::RngStream truth_rng(fc.experiment.seed, 0);
  letf::RngStream rng(fc.experiment.seed, 1);

  // synthetic truth and observations for z' = a z, y = z + N(0, r)
  double z = sc.m0 + std::sqrt(sc.p0) * truth_rng.normal();
  letf::PathProblem problem;
  problem.step = [a = sc.a](const letf::Vector& v) { return letf::Vector(a * v); };
  problem.om = letf::ObservationModel::selection({0}, letf::Vector::Constant(1, sc.r));
  std::vector<double> ys;
  for (letf::Index n = 0; n < sc.steps; ++n) {
    z *= sc.a;
    ys.push_back(z + std::sqrt(sc.r) * truth_rng.normal());
    problem.observations.push_back(letf::Vector::Constant(1, ys.back()));
  }
  const letf::ScalarGaussianPosterior exact = letf::scalar_linear_gaussian_posterior(sc.a, sc.m0, sc.p0, sc.r, ys);

  const auto prior = [&sc](letf::RngStream& g) { return letf::Vector::Constant(1, sc.m0 + std::sqrt(sc.p0) * g.normal()); };
  const letf::WeightedPaths paths = letf::path_importance_sampler(problem, prior, sc.samples, rng);
  const double is_mean = letf::posterior_mean_initial(paths)[0];

  const auto prior_log = [&sc](const letf::Vector& v) { return -0.5 * (v[0] - sc.m0) * (v[0] - sc.m0) / sc.p0; };
  const letf::McmcResult chain = letf::mcmc_path_sampler(problem, prior_log, letf::Vector::Constant(1, sc.m0),
                                                         sc.proposal_std, sc.mcmc_samples, rng, sc.burn_in);
  const letf::Vector samples = chain.samples.row(0).transpose();

  std::ostringstream os;
  os << std::setprecision(17) << "{\n  \"exact_mean\": " << exact.mean << ",\n  \"exact_variance\": " << exact.variance
     << ",\n  \"is_mean\": " << is_mean << ",\n  \"is_ess\": " << paths.ess << ",\n  \"mcmc_mean\": " << samples.mean()
     << ",\n  \"mcmc_stderr\": " << letf::batch_means_stderr(samples) << ",\n  \"mcmc_acceptance\": "
     << chain.acceptance_rate << "\n}\n";
  write(std::filesystem::path(args.out) / "smoother.txt", os.str());
  std::cout << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear ensemble transform filters: twin experiments and sampling studies"};
  app.require_subcommand(1);
  CommonArgs twin_args, sweep_args, qmc_args, smoother_args;
  auto* twin = app.add_subcommand("twin", "run a single twin experiment");
  auto* sweep = app.add_subcommand("sweep", "run a two parameter grid of twin experiments");
  auto* qmc = app.add_subcommand("qmc", "single step QMC convergence study");
  auto* smoother = app.add_subcommand("smoother", "path importance sampling and MCMC on a linear toy");
  add_common(twin, twin_args);
  add_common(sweep, sweep_args);
  add_common(qmc, qmc_args);
  add_common(smoother, smoother_args);
  CLI11_PARSE(app, argc, argv);

  try {
    if (*twin) return run_twin(twin_args);
    if (*sweep) return run_sweep(sweep_args);
    if (*qmc) return run_qmc(qmc_args);
    if (*smoother) return run_smoother(smoother_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
