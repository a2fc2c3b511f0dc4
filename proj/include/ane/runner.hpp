#pragma once

// Config-driven experiment runner.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ane/enhance.hpp"
#include "ane/io.hpp"
#include "ane/problems.hpp"

namespace ane {

struct RunConfig {
  std::string problem = "transition";
  double alpha = 0.01;
  std::optional<RectDomain> domain;
  AneConfig ane;
  bool two_layer_only = false;
  bool loss_traces = false;
  std::string outdir = "ane_out";
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& field, const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " +
                           (field.empty() ? std::string() : "'" + field + "': ") + message),
        line_(line),
        field_(field) {}

  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  if (!is || !(is >> std::ws).eof()) throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("expected true/false, got '" + text + "'");
}

}  // namespace detail

/// Parses `key = value` lines; '#' starts a comment.
inline RunConfig parse_config(std::istream& is, const std::string& source = "<config>") {
  RunConfig cfg;
  std::string raw;
  int line_no = 0;
  std::vector<std::string> seen;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "", "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ConfigError(source, line_no, key, "duplicate key");
    }
    seen.push_back(key);
    auto& a = cfg.ane;
    try {
      if (key == "problem") {
        if (value != "transition" && value != "two-segments" && value != "nonconstant-jump") {
          throw std::invalid_argument("unknown problem '" + value +
                                      "' (transition, two-segments, nonconstant-jump)");
        }
        cfg.problem = value;
      } else if (key == "alpha") {
        cfg.alpha = detail::parse_number<double>(value);
        if (!(cfg.alpha > 0.0)) throw std::invalid_argument("must be positive");
      } else if (key == "domain") {
        std::istringstream ds(value);
        double v[4];
        for (double& x : v) {
          if (!(ds >> x)) throw std::invalid_argument("expected 'x_min x_max y_min y_max'");
        }
        cfg.domain = RectDomain(v[0], v[1], v[2], v[3]);
      } else if (key == "m") {
        a.quadrature_resolution = detail::parse_number<int>(value);
        if (a.quadrature_resolution < 1) throw std::invalid_argument("must be >= 1");
      } else if (key == "m_b") {
        a.boundary_resolution = detail::parse_number<int>(value);
        if (a.boundary_resolution < 1) throw std::invalid_argument("must be >= 1");
      } else if (key == "n1") {
        a.initial_width = detail::parse_number<int>(value);
        if (a.initial_width < 1) throw std::invalid_argument("must be >= 1");
      } else if (key == "epsilon") {
        a.epsilon = detail::parse_number<double>(value);
        if (!(a.epsilon > 0.0)) throw std::invalid_argument("must be positive");
      } else if (key == "delta") {
        a.delta = detail::parse_number<double>(value);
        if (!(a.delta > 0.0 && a.delta < 2.0)) throw std::invalid_argument("must be in (0, 2)");
      } else if (key == "r") {
        a.rate_exponent = detail::parse_number<double>(value);
        if (!(a.rate_exponent > 0.0)) throw std::invalid_argument("must be positive");
      } else if (key == "gamma1") {
        a.gamma1 = detail::parse_number<double>(value);
        if (!(a.gamma1 > 0.0 && a.gamma1 < 1.0)) throw std::invalid_argument("must be in (0, 1)");
      } else if (key == "marking") {
        if (value == "bulk") a.marking = Marking::kBulk;
        else if (value == "average") a.marking = Marking::kAverage;
        else throw std::invalid_argument("expected 'bulk' or 'average'");
      } else if (key == "derivative") {
        if (value == "exact") a.slope_rule = SlopeRule::kExact;
        else if (value == "difference") a.slope_rule = SlopeRule::kCentralDifference;
        else throw std::invalid_argument("expected 'exact' or 'difference'");
      } else if (key == "lr") {
        a.optimizer.learning_rate = detail::parse_number<double>(value);
        if (!(a.optimizer.learning_rate > 0.0)) throw std::invalid_argument("must be positive");
      } else if (key == "max_iters") {
        a.optimizer.max_iters = detail::parse_number<int>(value);
        if (a.optimizer.max_iters < 1) throw std::invalid_argument("must be >= 1");
      } else if (key == "stop_window") {
        a.optimizer.stop_window = detail::parse_number<int>(value);
        if (a.optimizer.stop_window < 1) throw std::invalid_argument("must be >= 1");
      } else if (key == "stop_tol") {
        a.optimizer.stop_rel_tol = detail::parse_number<double>(value);
        if (!(a.optimizer.stop_rel_tol >= 0.0)) throw std::invalid_argument("must be >= 0");
      } else if (key == "max_loops") {
        a.max_loops = detail::parse_number<int>(value);
        if (a.max_loops < 1) throw std::invalid_argument("must be >= 1");
      } else if (key == "seed") {
        a.seed = detail::parse_number<std::uint64_t>(value);
        a.optimizer.seed = a.seed;
      } else if (key == "two_layer_only") {
        cfg.two_layer_only = detail::parse_bool(value);
      } else if (key == "loss_traces") {
        cfg.loss_traces = detail::parse_bool(value);
      } else if (key == "outdir") {
        if (value.empty()) throw std::invalid_argument("must not be empty");
        cfg.outdir = value;
      } else {
        throw std::invalid_argument("unknown key");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, line_no, key, e.what());
    }
  }
  if (cfg.ane.optimizer.max_iters < cfg.ane.optimizer.stop_window) {
    throw ConfigError(source, line_no, "max_iters", "must be >= stop_window");
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open file");
  return parse_config(in, path.string());
}

inline Problem make_problem(const RunConfig& cfg) {
  Problem p = problem_by_name(cfg.problem, cfg.alpha);
  if (cfg.domain) std::visit([&](auto& q) { q.domain = *cfg.domain; }, p);
  return p;
}

struct RunSummary {
  bool converged = false;
  AneResult result;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string loop_tag(int loop) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "loop_%02d", loop);
  return buf;
}

/// Runs the configured experiment and writes run_table.csv, summary.json,
/// checkpoints/, partitions/ (and loss/ if requested) under cfg.outdir.
inline RunSummary run_experiment(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.outdir);
  fs::create_directories(out / "checkpoints");
  fs::create_directories(out / "partitions");
  if (cfg.loss_traces) fs::create_directories(out / "loss");

  const Problem problem = make_problem(cfg);
  const auto task = make_task(problem, cfg.ane);
  AneDriver driver(*task, cfg.ane);
  driver.on_loop = [&](const LoopArtifacts& a) {
    const std::string tag = loop_tag(a.loop);
    write_text(out / "checkpoints" / (tag + ".json"), checkpoint_json(a.state->net, cfg.ane.seed, a.loop).dump(1) + "\n");
    for (const auto& level : a.state->levels) {
      write_text(out / "partitions" / (tag + "_layer_" + std::to_string(level.layer()) + ".json"),
                 partition_json(level).dump(1) + "\n");
    }
    if (cfg.loss_traces) {
      std::ostringstream os;
      write_loss_trace(os, a.training->loss_trace);
      write_text(out / "loss" / (tag + ".txt"), os.str());
    }
  };
  RunSummary summary;
  summary.result = driver.run(!cfg.two_layer_only);
  const auto& history = summary.result.history;
  summary.converged = history.converged;

  std::ostringstream table;
  write_run_table(table, history);
  write_text(out / "run_table.csv", table.str());

  const auto& last = history.records.back();
  json s;
  s["status"] = history.converged ? "converged" : "unconverged";
  s["problem"] = cfg.problem;
  s["seed"] = cfg.ane.seed;
  s["loops"] = history.records.size();
  s["final_architecture"] = last.architecture;
  s["params"] = last.params;
  s["error"] = last.error;
  s["xi_rel"] = last.xi_rel;
  s["warnings"] = summary.result.warnings;
  write_text(out / "summary.json", s.dump(1) + "\n");
  return summary;
}

}  // namespace ane
