// Acceptance checks. Prints one PASS/FAIL line per criterion; arguments pick
// the criteria to run (default: all). Exit status is nonzero on any failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ane/estimators.hpp"
#include "ane/io.hpp"
#include "ane/runner.hpp"
#include "oracles.hpp"

using namespace ane;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const RectDomain kSquare(-1.0, 1.0, -1.0, 1.0);

Outcome param_counts() {
  const std::vector<std::pair<std::vector<int>, std::size_t>> cases{
      {{12}, 37},    {{18}, 55},     {{18, 5}, 137},  {{6}, 19},      {{7}, 22},      {{7, 1}, 24},
      {{7, 2}, 33},  {{7, 3}, 42},   {{7, 4}, 51},    {{13}, 40},     {{13, 2}, 57},  {{13, 4}, 87},
      {{13, 7}, 132}, {{13, 9}, 162}, {{13, 10}, 177},
  };
  for (const auto& [w, n] : cases) {
    const Architecture a(w);
    if (param_count(a) != n) return {false, a.to_string() + " -> " + std::to_string(param_count(a))};
  }
  return {true, fmt("%zu architectures exact", cases.size())};
}

Outcome rate_arithmetic() {
  const double tol = 1e-5;
  const double e1 = std::abs(improvement_rate(0.357414, 0.323118, 37, 55, 1.0) - 0.293198);
  const double e2 = std::abs(improvement_rate(0.323118, 0.272614, 55, 93, 1.0) - 0.382528);
  const double e3 = std::abs(improvement_rate(0.323118, 0.025483, 55, 137, 1.0) - 1.538967);
  const double worst = std::max({e1, e2, e3});
  return {worst < tol, fmt("max |diff| = %.2e (tol %.0e)", worst, tol)};
}

Outcome estimator_identity() {
  std::mt19937_64 rng(301);
  const std::vector<std::vector<int>> shapes{{4}, {7}, {5, 3}, {6, 4}, {4, 3, 2}};
  const auto fit = target_transition(0.05);
  const auto fit_grid = make_grid(fit.domain, 60);
  const FunctionFitObjective fit_obj(fit, fit_grid);
  const auto lsnn = problem_nonconstant_jump();
  const auto grid = make_grid(lsnn.domain, 40);
  const auto inflow = inflow_mesh(lsnn.domain, lsnn.beta, 40);
  const LsnnObjective lsnn_obj(lsnn, grid, inflow);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Architecture arch(shapes[static_cast<std::size_t>(t) % shapes.size()]);
    const Network net = oracle::random_network(arch, rng);
    if (t % 2 == 0) {
      const auto ind = fn_indicators(fit_obj, net, physical_partition(net, fit.domain));
      const double norm = discrete_norm(fit_grid, sample(fit.f, fit_grid.points) - forward(net, fit_grid.points));
      worst = std::max(worst, std::abs(std::sqrt(ind.sum_of_squares()) - norm) / std::max(1.0, norm));
    } else {
      const auto ind = lsnn_indicators(lsnn_obj, net, physical_partition(net, lsnn.domain));
      const double lt = lsnn_obj.loss(net);
      worst = std::max(worst, std::abs(std::sqrt(ind.sum_of_squares()) - std::sqrt(lt)) / std::max(1.0, lt));
    }
  }
  return {worst < 1e-12, fmt("50 networks, max scaled diff = %.2e (tol 1e-12)", worst)};
}

std::vector<Point> interior_samples(const Polygon& poly) {
  const Point c = centroid(poly);
  std::vector<Point> out{c};
  for (const auto& v : poly) {
    out.push_back(c + 0.9 * (v - c));
    out.push_back(c + 0.4 * (v - c));
  }
  return out;
}

Outcome partition_oracle() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> w1(1, 6);
  std::uniform_int_distribution<int> w2(0, 4);
  int bad = 0;
  double worst_area = 0.0;
  std::size_t cells = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<int> widths{w1(rng)};
    if (const int k = w2(rng); k > 0) widths.push_back(k);
    const Network net = oracle::random_network(Architecture(widths), rng);
    const auto pp = physical_partition(net, kSquare);
    cells += pp.size();
    worst_area = std::max(worst_area, std::abs(pp.total_area() - 4.0));
    std::vector<std::vector<char>> pats(pp.size());
    for (const auto& cell : pp.cells()) {
      const auto samples = interior_samples(cell.vertices);
      auto& p = pats[static_cast<std::size_t>(cell.id)];
      p = oracle::pattern(net, samples.front());
      for (const auto& s : samples) bad += oracle::pattern(net, s) != p;
    }
    for (const auto& [i, j] : pp.adjacency()) {
      bad += pats[static_cast<std::size_t>(i)] == pats[static_cast<std::size_t>(j)];
    }
  }
  const auto start = physical_partition(init_two_layer_uniform(12, kSquare), kSquare).size();
  const bool ok = bad == 0 && worst_area < 1e-8 && start == 36;
  return {ok, fmt("%zu cells over 100 nets, %d violations, max area err %.1e, initial cells %zu", cells, bad,
                  worst_area, start)};
}

Outcome gradient_checks() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<std::vector<int>> shapes{{5}, {6, 4}, {4, 3, 3}};
  double worst = 0.0;
  int probes = 0;
  while (probes < 200) {
    const Architecture arch(shapes[static_cast<std::size_t>(probes) % shapes.size()]);
    const Network net = oracle::random_network(arch, rng);
    const Point x(u(rng), u(rng));
    if (oracle::kink_margin(net, x) < 1e-3) continue;
    ++probes;
    Points pts(2, 1);
    pts.col(0) = x;
    const Eigen::VectorXd gp = grad_params(net, pts, Eigen::VectorXd::Ones(1));
    const Eigen::VectorXd fdp = oracle::central_difference(
        [&](const Eigen::VectorXd& p) { return oracle::scalar_value(Network::unflatten(arch, p), x); },
        net.flatten(), 1e-6);
    worst = std::max(worst, (gp - fdp).norm() / std::max(1.0, fdp.norm()));
    const Eigen::VectorXd gx = grad_input(net, pts).col(0);
    const Eigen::VectorXd fdx = oracle::central_difference(
        [&](const Eigen::VectorXd& p) { return oracle::scalar_value(net, Point(p[0], p[1])); }, x, 1e-6);
    worst = std::max(worst, (gx - fdx).norm() / std::max(1.0, fdx.norm()));
  }
  return {worst < 1e-5, fmt("200 probes, max rel err %.2e (tol 1e-5)", worst)};
}

Outcome width_preservation() {
  std::mt19937_64 rng(606);
  const auto grid = make_grid(kSquare, 200);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Network two = oracle::random_network(Architecture({8}), rng);
    const Network wider = add_first_layer_neurons(two, {{0.7, 0.2}, {-1.1, -0.3}, {2.4, 0.0}});
    worst = std::max(worst, (forward(two, grid.points) - forward(wider, grid.points)).cwiseAbs().maxCoeff());
    const Network deep = oracle::random_network(Architecture({7, 5}), rng);
    std::mt19937_64 draw(static_cast<std::uint64_t>(t));
    std::vector<DeepNeuronInit> add{init_deep_neuron(deep, 1, {{0.2, 0.1}, {-0.5, 0.4}}, draw),
                                    init_deep_neuron(deep, 1, {{0.0, -0.7}}, draw)};
    const Network deeper = add_last_layer_neurons(deep, add);
    worst = std::max(worst, (forward(deep, grid.points) - forward(deeper, grid.points)).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-12, fmt("max diff on 200x200 grid %.2e (tol 1e-12)", worst)};
}

RunConfig shipped(const std::string& name, std::uint64_t seed) {
  RunConfig cfg = load_config(fs::path(ANE_SOURCE_DIR) / "configs" / (name + ".conf"));
  cfg.ane.seed = seed;
  cfg.ane.optimizer.seed = seed;
  cfg.outdir = (fs::temp_directory_path() / ("ane_accept_" + name + "_" + std::to_string(seed))).string();
  fs::remove_all(cfg.outdir);
  return cfg;
}

// Runs up to three seeds; `judge` describes and grades one run.
Outcome end_to_end(const std::string& name, const std::function<Outcome(const AneResult&)>& judge) {
  std::string log;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto summary = run_experiment(shipped(name, seed));
    const Outcome o = judge(summary.result);
    log += fmt("%sseed %d: ", log.empty() ? "" : "; ", static_cast<int>(seed)) + o.detail;
    std::fprintf(stderr, "[acceptance] %s seed %d: %s\n", name.c_str(), static_cast<int>(seed), o.detail.c_str());
    if (o.pass) return {true, log};
  }
  return {false, log};
}

Outcome transition_fit() {
  return end_to_end("transition", [](const AneResult& r) {
    const auto& last = r.history.records.back();
    const int layers = Architecture::parse(last.architecture).hidden_layers();
    const bool ok = r.history.converged && last.xi < 0.05 && layers == 2 && last.params <= 300;
    return Outcome{ok, fmt("%s N=%zu xi=%.6f (need xi<0.05, 2 hidden layers, N<=300)", last.architecture.c_str(),
                           last.params, last.xi)};
  });
}

Outcome two_segments() {
  return end_to_end("two-segments", [](const AneResult& r) {
    const auto& last = r.history.records.back();
    bool deepened = false;
    for (const auto& rec : r.history.records) deepened |= Architecture::parse(rec.architecture).hidden_layers() >= 2;
    const bool ok = r.history.converged && deepened && last.xi_rel < 0.05 && last.error < 0.2;
    return Outcome{ok, fmt("%s xi_rel=%.6f L2=%.6f layer added=%s (need xi_rel<0.05, L2<0.2)",
                           last.architecture.c_str(), last.xi_rel, last.error, deepened ? "yes" : "no")};
  });
}

Outcome nonconstant_jump() {
  return end_to_end("nonconstant-jump", [](const AneResult& r) {
    const auto& last = r.history.records.back();
    const bool ok = r.history.converged && last.xi_rel < 0.03 && last.error < 0.05;
    return Outcome{ok, fmt("%s xi_rel=%.6f L2=%.6f (need xi_rel<0.03, L2<0.05)", last.architecture.c_str(),
                           last.xi_rel, last.error)};
  });
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  // Short runs of both task kinds that still go through rollback and deep growth.
  int compared = 0;
  for (const std::string name : {"transition", "two-segments"}) {
    std::vector<fs::path> dirs;
    for (int rep = 0; rep < 2; ++rep) {
      RunConfig cfg = shipped(name, 5);
      cfg.ane.quadrature_resolution = 40;
      cfg.ane.boundary_resolution = 40;
      cfg.ane.optimizer.max_iters = 600;
      cfg.ane.optimizer.stop_window = 200;
      cfg.ane.max_loops = 5;
      cfg.ane.delta = 1.9;
      cfg.outdir += "_det" + std::to_string(rep);
      fs::remove_all(cfg.outdir);
      run_experiment(cfg);
      dirs.emplace_back(cfg.outdir);
    }
    if (slurp(dirs[0] / "run_table.csv") != slurp(dirs[1] / "run_table.csv")) {
      return {false, name + ": run tables differ"};
    }
    for (const auto& e : fs::directory_iterator(dirs[0] / "checkpoints")) {
      const auto other = dirs[1] / "checkpoints" / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
        return {false, name + ": checkpoint " + e.path().filename().string() + " differs"};
      }
      ++compared;
    }
  }
  return {true, fmt("run tables and %d checkpoints byte-identical", compared)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"parameter counts", param_counts}},
      {2, {"improvement-rate arithmetic", rate_arithmetic}},
      {3, {"estimator identity", estimator_identity}},
      {4, {"partition oracle", partition_oracle}},
      {5, {"gradient checks", gradient_checks}},
      {6, {"width enhancement preserves the function", width_preservation}},
      {7, {"transition fit end to end", transition_fit}},
      {8, {"two-segments LSNN end to end", two_segments}},
      {9, {"nonconstant-jump LSNN end to end", nonconstant_jump}},
      {10, {"determinism", determinism}},
  };
  std::vector<int> pick;
  for (int i = 1; i < argc; ++i) pick.push_back(std::atoi(argv[i]));
  if (pick.empty()) {
    for (const auto& [k, _] : criteria) pick.push_back(k);
  }
  int failures = 0;
  for (int k : pick) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::printf("FAIL criterion %d: no such criterion\n", k);
      ++failures;
      continue;
    }
    Outcome o{false, ""};
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", k, it->second.first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
