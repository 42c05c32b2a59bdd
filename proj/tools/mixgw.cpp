#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixgw/mixgw.hpp"

namespace fs = std::filesystem;
using namespace mixgw;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDimension = 3;
constexpr int kExitSolver = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
    case ErrorCode::kIo:
    case ErrorCode::kTooFewPoints:
    case ErrorCode::kInvalidConfig:
      return kExitUsage;
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kDimensionOrder:
      return kExitDimension;
    default:
      return kExitSolver;
  }
}

struct SolverFlags {
  std::string metric = "mgw2";
  SolverConfig config;

  void attach(CLI::App* app) {
    app->add_option("--metric", metric, "mw2 | mgw2 | mew2")->check(CLI::IsMember({"mw2", "mgw2", "mew2"}));
    app->add_option("--seed", config.seed, "random seed");
    app->add_option("--alpha", config.anneal_alpha, "annealing decay factor");
    app->add_option("--eps0", config.anneal_eps0, "initial entropic regularisation");
    app->add_option("--anneal-iters", config.anneal_iters, "number of annealing stages (0 disables)");
    app->add_option("--eta", config.step_size_eta, "projected gradient step size");
    app->add_option("--max-iters", config.max_outer_iters, "outer iteration cap");
    app->add_option("--tol", config.objective_rel_tol, "relative objective tolerance");
    app->add_option("--restarts", config.n_restarts, "mew2 restarts");
  }
};

// Input files are the user's responsibility: any problem while loading them is a usage error.
Gmm load_gmm(const std::string& path) {
  try {
    return io::read_gmm(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    fail(ErrorCode::kParse, path + ": " + e.what());
  }
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::write_text(path, text);
  }
}

Gmm fit_points(const Matrix& points, int components, std::uint64_t seed) {
  EmConfig em;
  em.n_components = components;
  em.seed = seed;
  return fit_em(points, em);
}

// Solves the metric between two fitted mixtures and turns the result into a
// plan from g0's space into g1's.
MixturePlan solve_plan(const Gmm& g0, const Gmm& g1, const SolverFlags& flags) {
  const Metric metric = parse_metric(flags.metric);
  if (metric == Metric::kMw2) return build_plan(g0, g1, mw2(g0, g1).omega);
  if (g0.dim() < g1.dim()) fail(ErrorCode::kDimensionOrder, "source dimension must be at least the target dimension");
  if (metric == Metric::kMew2) {
    const DistanceResult r = mew2(g0, g1, flags.config);
    return build_plan(g0, g1, r.omega, r.p, r.b);
  }
  const DistanceResult r = mgw2(g0, g1, flags.config);
  const Registration reg = mgw2_registration(g0, g1, r.omega, flags.config);
  return build_plan(g0, g1, r.omega, reg.p, reg.b);
}

int cmd_fit(const std::string& input, int components, std::uint64_t seed, const std::string& output) {
  const Matrix points = io::read_csv(input);
  const Gmm g = fit_points(points, components, seed);
  emit(output, io::gmm_to_json(g).dump(2) + "\n");
  return kExitOk;
}

int cmd_dist(const std::string& a, const std::string& b, const SolverFlags& flags, const std::string& output) {
  const Gmm g0 = load_gmm(a);
  const Gmm g1 = load_gmm(b);
  const auto start = std::chrono::steady_clock::now();
  const DistanceResult r = compute_distance(parse_metric(flags.metric), g0, g1, flags.config);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  emit(output, io::run_report(r, flags.config, ms).dump(2) + "\n");
  return kExitOk;
}

int cmd_match(const std::string& a, const std::string& b, const SolverFlags& flags, int components,
              const std::string& truth_path, const std::string& output) {
  const Matrix xs = io::read_csv(a);
  const Matrix ys = io::read_csv(b);
  std::optional<Matrix> truth;
  if (!truth_path.empty()) {
    truth = io::read_csv(truth_path);
    if (truth->rows() != xs.rows() || truth->cols() != ys.cols()) fail(ErrorCode::kDimensionMismatch, "truth must have one target-space row per source row");
  }
  const Gmm g0 = fit_points(xs, components, flags.config.seed);
  const Gmm g1 = fit_points(ys, components, flags.config.seed);
  const MixturePlan plan = solve_plan(g0, g1, flags);
  const MatchResult m = match_points(plan, xs, ys, truth);

  std::ostringstream out;
  out << std::setprecision(17) << "source,target";
  for (Eigen::Index j = 0; j < ys.cols(); ++j) out << ",y" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out << i << ',' << m.assignment[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ys.cols(); ++j) out << ',' << m.mapped_points(i, j);
    out << '\n';
  }
  emit(output, out.str());
  if (m.distortion) {
    std::cerr << "distortion " << std::setprecision(17) << *m.distortion << '\n';
    if (!output.empty() && output != "-") {
      const io::json side = {{"metric", flags.metric}, {"distortion", *m.distortion}, {"rows", xs.rows()},
                             {"config", io::config_to_json(flags.config)}};
      io::write_text(output + ".json", side.dump(2) + "\n");
    }
  }
  return kExitOk;
}

int cmd_transfer(const std::string& source, const std::string& palette, const SolverFlags& flags, int components,
                 const std::string& output) {
  const Matrix us = io::read_csv(source);
  const Matrix vs = io::read_csv(palette);
  if (us.cols() < vs.cols()) fail(ErrorCode::kDimensionOrder, "source dimension must be at least the palette dimension");
  const Gmm g0 = fit_points(us, components, flags.config.seed);
  const Gmm g1 = fit_points(vs, components, flags.config.seed);
  const MixturePlan plan = solve_plan(g0, g1, flags);
  const Matrix mapped = TMean(plan).apply_rows(us, true);
  if (!mapped.allFinite()) fail(ErrorCode::kSolverFailure, "transfer produced non-finite values");
  std::ostringstream out;
  io::write_csv(out, mapped);
  emit(output, out.str());
  return kExitOk;
}

int cmd_pairwise(const std::string& dir, const SolverFlags& flags, unsigned workers, const std::string& output) {
  if (!fs::is_directory(dir)) fail(ErrorCode::kIo, "'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) fail(ErrorCode::kIo, "'" + dir + "' holds fewer than two GMM JSON files");
  std::vector<Gmm> gmms;
  std::vector<std::string> names;
  for (const auto& f : files) {
    gmms.push_back(load_gmm(f.string()));
    names.push_back(f.filename().string());
  }
  const Matrix d = pairwise_distance_matrix(gmms, parse_metric(flags.metric), flags.config, workers);
  std::ostringstream out;
  io::write_csv(out, d, names);
  emit(output, out.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distances, plans and matchings between Gaussian mixture models"};
  app.require_subcommand(1);

  std::string output;
  std::string in_a, in_b, truth;
  int components = 10;
  unsigned workers = 1;
  std::uint64_t fit_seed = 0;
  SolverFlags flags;

  auto* fit = app.add_subcommand("fit", "fit a GMM to a point CSV");
  fit->add_option("input", in_a, "point CSV")->required();
  fit->add_option("--components,-k", components, "number of components")->check(CLI::PositiveNumber);
  fit->add_option("--seed", fit_seed, "random seed");
  fit->add_option("--output,-o", output, "GMM JSON path (stdout if omitted)");

  auto* dist = app.add_subcommand("dist", "distance between two GMM JSON files");
  dist->add_option("gmm_a", in_a)->required();
  dist->add_option("gmm_b", in_b)->required();
  flags.attach(dist);
  dist->add_option("--output,-o", output, "report JSON path (stdout if omitted)");

  auto* match = app.add_subcommand("match", "match two point clouds");
  match->add_option("points_a", in_a)->required();
  match->add_option("points_b", in_b)->required();
  flags.attach(match);
  match->add_option("--components,-k", components)->check(CLI::PositiveNumber);
  match->add_option("--truth", truth, "CSV of ground-truth target coordinates per source row");
  match->add_option("--output,-o", output, "match CSV path (stdout if omitted)");

  auto* transfer = app.add_subcommand("transfer", "map source rows into the palette space");
  transfer->add_option("source", in_a)->required();
  transfer->add_option("palette", in_b)->required();
  flags.attach(transfer);
  transfer->add_option("--components,-k", components)->check(CLI::PositiveNumber);
  transfer->add_option("--output,-o", output, "output CSV path (stdout if omitted)");

  auto* pairwise = app.add_subcommand("pairwise", "distance matrix over a directory of GMM JSON files");
  pairwise->add_option("dir", in_a)->required();
  flags.attach(pairwise);
  pairwise->add_option("--workers", workers, "parallel workers")->check(CLI::PositiveNumber);
  pairwise->add_option("--output,-o", output, "matrix CSV path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit) return cmd_fit(in_a, components, fit_seed, output);
    if (*dist) return cmd_dist(in_a, in_b, flags, output);
    if (*match) return cmd_match(in_a, in_b, flags, components, truth, output);
    if (*transfer) return cmd_transfer(in_a, in_b, flags, components, output);
    if (*pairwise) return cmd_pairwise(in_a, flags, workers, output);
  } catch (const Error& e) {
    std::cerr << "mixgw: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "mixgw: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitUsage;
}
