// Command-line front end: run, bench, stability, gen, selftest.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "orme/orme.hpp"

namespace fs = std::filesystem;
using namespace orme;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAssumption = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::string out = ".";
};

ExperimentConfig resolve(const Common& c, const json& base = json::object()) {
  json user = base;
  if (!c.config.empty()) user.merge_patch(read_config_file(c.config));
  ExperimentConfig cfg = resolve_config(user);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  fs::create_directories(p);
  return p;
}

void write_svg(const fs::path& path, const std::vector<Series>& series, const ChartLabels& labels) {
  if (series.empty()) {
    std::cerr << "note: nothing positive to plot, " << path.string() << " not written\n";
    return;
  }
  write_text(path.string(), render_svg(series, labels));
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const ExperimentReport rep = run_experiment(cfg, c.workers);
  const fs::path dir = out_dir(c);
  write_text((dir / "report.csv").string(), report_csv(rep));
  write_text((dir / "report.json").string(), report_json(rep).dump(2) + "\n");
  write_svg(dir / "curves.svg", curve_series(rep), {"cumulative l2 error vs T", "T", "l2 error"});
  for (const auto& r : rep.aggregates)
    if (r.trial == "mean" && r.t == cfg.T)
      std::cout << r.estimator << ": mean l2 error " << format_number(r.cum_err) << "\n";
  return 0;
}

int cmd_bench(const Common& c, const std::string& preset) {
  const ExperimentConfig cfg = resolve(c, preset.empty() ? json::object() : preset_json(preset));
  const BenchResult res = run_bench(cfg, c.workers);
  const fs::path dir = out_dir(c);
  for (const auto& rep : res.reports) {
    const fs::path sub = dir / ("T" + std::to_string(rep.config.T));
    fs::create_directories(sub);
    write_text((sub / "report.csv").string(), report_csv(rep));
  }
  write_text((dir / "bench.json").string(), bench_json(res).dump(2) + "\n");
  write_svg(dir / "curves.svg", bench_series(res), {"final l2 error vs T", "T", "l2 error"});
  for (const auto& s : res.estimators) {
    std::cout << s.estimator << ": slope " << format_number(s.slope_mean) << " [" << format_number(s.slope_ci_low)
              << ", " << format_number(s.slope_ci_high) << "], best model " << s.winner << ", error ratio last/first "
              << format_number(s.ratio_last_first) << "\n";
  }
  return 0;
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("input: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("input: non-numeric cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ConfigError("input: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("input: no rows");
  Matrix S(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return S;
}

int cmd_stability(const Common& c, const std::string& input, const std::string& mode,
                  const std::optional<double>& claimed) {
  const ExperimentConfig cfg = resolve(c);
  Matrix S;
  Vector mu;
  if (!input.empty()) {
    S = read_matrix_csv(input);
    mu = S.colwise().mean().transpose();
  } else {
    const SampleStream s = make_trial_stream(cfg, 0);
    const auto& mask = s.corrupted_mask();
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) keep.push_back(static_cast<Eigen::Index>(i));
    S = s.data()(keep, Eigen::all);
    mu = s.true_mean();
  }
  const bool exact = mode == "exact" || (mode == "auto" && S.cols() <= 3);
  const StabilityReport r = exact ? check_stability_exact(S, mu, cfg.epsilon)
                                  : check_stability_heuristic(S, mu, cfg.epsilon, claimed);
  const std::string text = stability_json(r).dump(2) + "\n";
  write_text((out_dir(c) / "stability.json").string(), text);
  std::cout << text;
  return 0;
}

int cmd_gen(const Common& c, std::size_t trial) {
  const ExperimentConfig cfg = resolve(c);
  const SampleStream s = make_trial_stream(cfg, trial);
  std::string text;
  for (std::size_t j = 0; j < s.M(); ++j) text += "x" + std::to_string(j + 1) + ",";
  text += "corrupted,tag\n";
  for (std::size_t i = 0; i < s.n(); ++i) {
    for (std::size_t j = 0; j < s.M(); ++j)
      text += format_number(s.data()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) + ",";
    text += (s.corrupted_mask()[i] ? "1," : "0,") + std::to_string(s.tags()[i]) + "\n";
  }
  const fs::path dir = out_dir(c);
  write_text((dir / "stream.csv").string(), text);
  std::string mean;
  for (Eigen::Index j = 0; j < s.true_mean().size(); ++j) mean += (j ? "," : "") + format_number(s.true_mean()(j));
  write_text((dir / "true_mean.csv").string(), mean + "\n");
  std::cout << "wrote " << s.n() << " rows x " << s.M() << " columns, " << s.corrupted_count() << " corrupted\n";
  return 0;
}

int cmd_selftest() {
  bool all = true;
  for (const auto& r : run_selftest()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
    all = all && r.passed;
  }
  return all ? 0 : kExitAssumption;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online robust mean estimation: estimators, adversaries and benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  app.add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", c.seed, "master seed (overrides config and environment)");
  app.add_option("--workers", c.workers, "trial worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", c.out, "output directory");

  auto* run = app.add_subcommand("run", "run all trials and write report.csv, report.json, curves.svg");
  std::string preset;
  auto* bench = app.add_subcommand("bench", "scaling benchmark over T_grid with slope fits");
  bench->add_option("--preset", preset, "named setup")->check(CLI::IsMember(preset_names()));
  std::string input, mode = "auto";
  std::optional<double> claimed;
  auto* stab = app.add_subcommand("stability", "stability check of the clean rows, or of --input");
  stab->add_option("--input", input, "CSV of points, one row per sample")->check(CLI::ExistingFile);
  stab->add_option("--mode", mode, "exact, heuristic or auto")->check(CLI::IsMember({"exact", "heuristic", "auto"}));
  stab->add_option("--delta", claimed, "claimed delta to refute (heuristic mode)");
  std::size_t trial = 0;
  auto* gen = app.add_subcommand("gen", "write one trial's corrupted stream to stream.csv");
  gen->add_option("--trial", trial, "trial index");
  auto* self = app.add_subcommand("selftest", "fast invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(c);
    if (bench->parsed()) return cmd_bench(c, preset);
    if (stab->parsed()) return cmd_stability(c, input, mode, claimed);
    if (gen->parsed()) return cmd_gen(c, trial);
    if (self->parsed()) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const AssumptionViolation& e) {
    std::cerr << "assumption violated: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const OnlineDisciplineError& e) {
    std::cerr << "online discipline violated: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
