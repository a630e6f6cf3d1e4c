#pragma once

// Per-round experiment records, trial aggregates, and CSV/JSON emission.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "orme/harness/config.hpp"
#include "orme/stability.hpp"

namespace orme {

inline constexpr const char* kCsvHeader = "trial,t,estimator,err_sq,cum_err,total_weight,potential,cov_norm,ms";

struct Record {
  std::string trial;  // index, or "mean" / "std" for aggregates
  std::size_t t = 0;
  std::string estimator;
  double err_sq = 0.0;
  double cum_err = 0.0;  // sqrt of the running sum of err_sq
  std::optional<double> total_weight;
  std::optional<double> potential;
  std::optional<double> cov_norm;
  std::optional<double> ms;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::string> estimators;
  std::vector<Record> records;     // trial-major, then estimator, then t
  std::vector<Record> aggregates;  // estimator-major, then t, mean before std
};

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  return buf;
}

inline std::string format_optional(const std::optional<double>& x) { return x ? format_number(*x) : std::string(); }

namespace detail {

struct Moments {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++count;
  }
  double mean() const { return sum / static_cast<double>(count); }
  // Sample standard deviation; 0 for a single trial.
  double stddev() const {
    if (count < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, (sum_sq - static_cast<double>(count) * m * m) / static_cast<double>(count - 1)));
  }
};

struct FieldAcc {
  Moments err_sq, cum_err;
  std::optional<Moments> total_weight, potential, cov_norm, ms;
  bool drop_total_weight = false, drop_potential = false, drop_cov_norm = false, drop_ms = false;

  static void add_opt(std::optional<Moments>& acc, bool& drop, const std::optional<double>& x) {
    if (!x) {
      drop = true;
      return;
    }
    if (!acc) acc.emplace();
    acc->add(*x);
  }
  void add(const Record& r) {
    err_sq.add(r.err_sq);
    cum_err.add(r.cum_err);
    add_opt(total_weight, drop_total_weight, r.total_weight);
    add_opt(potential, drop_potential, r.potential);
    add_opt(cov_norm, drop_cov_norm, r.cov_norm);
    add_opt(ms, drop_ms, r.ms);
  }
};

inline std::optional<double> pick(const std::optional<Moments>& m, bool drop, bool want_mean) {
  if (drop || !m) return std::nullopt;
  return want_mean ? m->mean() : m->stddev();
}

}  // namespace detail

// Mean and sample standard deviation over trials; a diagnostic missing in any
// trial stays missing in the aggregate.
inline std::vector<Record> aggregate(const std::vector<Record>& records, const std::vector<std::string>& estimators) {
  std::map<std::pair<std::string, std::size_t>, detail::FieldAcc> acc;
  std::size_t max_t = 0;
  for (const auto& r : records) {
    acc[{r.estimator, r.t}].add(r);
    max_t = std::max(max_t, r.t);
  }
  std::vector<Record> out;
  for (const auto& name : estimators) {
    for (std::size_t t = 1; t <= max_t; ++t) {
      auto it = acc.find({name, t});
      if (it == acc.end()) continue;
      const auto& a = it->second;
      for (bool mean : {true, false}) {
        Record r;
        r.trial = mean ? "mean" : "std";
        r.t = t;
        r.estimator = name;
        r.err_sq = mean ? a.err_sq.mean() : a.err_sq.stddev();
        r.cum_err = mean ? a.cum_err.mean() : a.cum_err.stddev();
        r.total_weight = detail::pick(a.total_weight, a.drop_total_weight, mean);
        r.potential = detail::pick(a.potential, a.drop_potential, mean);
        r.cov_norm = detail::pick(a.cov_norm, a.drop_cov_norm, mean);
        r.ms = detail::pick(a.ms, a.drop_ms, mean);
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

inline std::string csv_row(const Record& r) {
  std::string s = r.trial + "," + std::to_string(r.t) + "," + r.estimator + "," + format_number(r.err_sq) + "," +
                  format_number(r.cum_err) + "," + format_optional(r.total_weight) + "," +
                  format_optional(r.potential) + "," + format_optional(r.cov_norm) + "," + format_optional(r.ms);
  return s;
}

inline std::string report_csv(const ExperimentReport& rep) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rep.records) out += csv_row(r) + "\n";
  for (const auto& r : rep.aggregates) out += csv_row(r) + "\n";
  return out;
}

inline json record_json(const Record& r) {
  auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  json j;
  j["trial"] = r.trial;
  j["t"] = r.t;
  j["estimator"] = r.estimator;
  j["err_sq"] = r.err_sq;
  j["cum_err"] = r.cum_err;
  j["total_weight"] = opt(r.total_weight);
  j["potential"] = opt(r.potential);
  j["cov_norm"] = opt(r.cov_norm);
  j["ms"] = opt(r.ms);
  return j;
}

inline json report_json(const ExperimentReport& rep) {
  json j;
  j["config"] = config_to_json(rep.config);
  j["estimators"] = rep.estimators;
  j["records"] = json::array();
  for (const auto& r : rep.records) j["records"].push_back(record_json(r));
  j["aggregates"] = json::array();
  for (const auto& r : rep.aggregates) j["aggregates"].push_back(record_json(r));
  return j;
}

inline json stability_json(const StabilityReport& r) {
  json j;
  j["mode"] = r.mode == StabilityMode::Exact ? "exact" : "heuristic";
  j["epsilon"] = r.epsilon;
  j["delta_required"] = r.delta_required;
  j["mean_deviation"] = r.mean_deviation;
  j["second_deviation"] = r.second_deviation;
  j["grid_slack"] = r.grid_slack;
  if (r.witness) {
    j["witness"] = {{"condition", r.witness->condition},
                    {"deviation", r.witness->deviation},
                    {"direction", std::vector<double>(r.witness->direction.data(),
                                                      r.witness->direction.data() + r.witness->direction.size())},
                    {"subset_size", r.witness->subset.size()}};
  } else {
    j["witness"] = nullptr;
  }
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace orme
