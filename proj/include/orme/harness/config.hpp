#pragma once

// JSON configuration: parsing with key-named errors, serialization, and
// ORME_<PATH> environment overrides.

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "orme/core.hpp"

namespace orme {

using json = nlohmann::ordered_json;

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["epsilon"] = c.epsilon;
  j["T"] = c.T;
  j["d"] = c.d;
  j["n"] = c.n;
  j["n_pow2_factor"] = c.n_pow2_factor ? json(*c.n_pow2_factor) : json(nullptr);
  j["lambda"] = c.lambda ? json(*c.lambda) : json(nullptr);
  j["kappa"] = c.kappa;
  j["delta"] = c.delta ? json(*c.delta) : json(nullptr);
  j["gamma"] = c.gamma;
  j["tau"] = c.tau;
  json tail;
  tail["name"] = c.tail.name;
  tail["k"] = c.tail.k;
  tail["table"] = json::array();
  for (auto& [q, f] : c.tail.table) tail["table"].push_back({q, f});
  j["tail"] = tail;
  j["generator"] = {{"name", c.generator}, {"params", json::object()}};
  for (auto& [k, v] : c.generator_params) j["generator"]["params"][k] = v;
  j["adversary"] = {{"name", c.adversary}, {"params", json::object()}};
  for (auto& [k, v] : c.adversary_params) j["adversary"]["params"][k] = v;
  j["estimators"] = c.estimators;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["beta_rule"] = c.beta_rule;
  j["directions"] = c.directions;
  j["calibration_constant"] = c.calibration_constant;
  j["T_grid"] = c.T_grid;
  j["record_timing"] = c.record_timing;
  return j;
}

namespace detail {

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key + ": wrong type (" + std::string(j.type_name()) + ")");
  }
}

inline double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError(key + ": expected a number");
  return j.get<double>();
}

inline std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError(key + ": expected a nonnegative integer");
  return j.get<std::size_t>();
}

inline void read_params(const json& j, const std::string& key, std::map<std::string, double>& out) {
  if (!j.is_object()) throw ConfigError(key + ": expected an object");
  out.clear();
  for (auto& [k, v] : j.items()) out[k] = get_number(v, key + "." + k);
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  ExperimentConfig c;
  static const std::set<std::string> known{"epsilon", "T", "d", "n", "n_pow2_factor", "lambda", "kappa", "delta",
                                           "gamma", "tau", "tail", "generator", "adversary", "estimators", "trials",
                                           "seed", "beta_rule", "directions", "calibration_constant", "T_grid",
                                           "record_timing"};
  for (auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError(k + ": unknown key");

  using namespace detail;
  if (j.contains("epsilon")) c.epsilon = get_number(j["epsilon"], "epsilon");
  if (j.contains("T")) c.T = get_count(j["T"], "T");
  if (j.contains("d")) c.d = get_count(j["d"], "d");
  if (j.contains("n")) c.n = get_count(j["n"], "n");
  if (j.contains("n_pow2_factor") && !j["n_pow2_factor"].is_null())
    c.n_pow2_factor = get_number(j["n_pow2_factor"], "n_pow2_factor");
  if (j.contains("lambda") && !j["lambda"].is_null()) c.lambda = get_number(j["lambda"], "lambda");
  if (j.contains("kappa")) c.kappa = get_number(j["kappa"], "kappa");
  if (j.contains("delta") && !j["delta"].is_null()) c.delta = get_number(j["delta"], "delta");
  if (j.contains("gamma")) c.gamma = get_number(j["gamma"], "gamma");
  if (j.contains("tau")) c.tau = get_number(j["tau"], "tau");
  if (j.contains("tail")) {
    const json& t = j["tail"];
    if (!t.is_object()) throw ConfigError("tail: expected an object");
    for (auto& [k, v] : t.items())
      if (k != "name" && k != "k" && k != "table") throw ConfigError("tail." + k + ": unknown key");
    if (t.contains("name")) c.tail.name = get_as<std::string>(t["name"], "tail.name");
    if (t.contains("k")) c.tail.k = get_number(t["k"], "tail.k");
    if (t.contains("table")) {
      if (!t["table"].is_array()) throw ConfigError("tail.table: expected an array of [q, F] pairs");
      for (auto& row : t["table"]) {
        if (!row.is_array() || row.size() != 2) throw ConfigError("tail.table: expected [q, F] pairs");
        c.tail.table.emplace_back(get_number(row[0], "tail.table"), get_number(row[1], "tail.table"));
      }
    }
  }
  for (const char* which : {"generator", "adversary"}) {
    if (!j.contains(which)) continue;
    const json& g = j[which];
    std::string& name = std::string(which) == "generator" ? c.generator : c.adversary;
    auto& params = std::string(which) == "generator" ? c.generator_params : c.adversary_params;
    if (g.is_string()) {
      name = g.get<std::string>();
      continue;
    }
    if (!g.is_object()) throw ConfigError(std::string(which) + ": expected a name or an object");
    for (auto& [k, v] : g.items())
      if (k != "name" && k != "params") throw ConfigError(std::string(which) + "." + k + ": unknown key");
    if (g.contains("name")) name = get_as<std::string>(g["name"], std::string(which) + ".name");
    if (g.contains("params")) read_params(g["params"], std::string(which) + ".params", params);
  }
  if (j.contains("estimators")) {
    const json& e = j["estimators"];
    if (e.is_string()) {
      c.estimators = {e.get<std::string>()};
    } else {
      if (!e.is_array()) throw ConfigError("estimators: expected an array of names");
      c.estimators.clear();
      for (auto& x : e) c.estimators.push_back(get_as<std::string>(x, "estimators"));
    }
  }
  if (j.contains("trials")) c.trials = get_count(j["trials"], "trials");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0))
      throw ConfigError("seed: expected an unsigned 64-bit integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("beta_rule")) c.beta_rule = get_as<std::string>(j["beta_rule"], "beta_rule");
  if (j.contains("directions")) c.directions = get_count(j["directions"], "directions");
  if (j.contains("calibration_constant"))
    c.calibration_constant = get_number(j["calibration_constant"], "calibration_constant");
  if (j.contains("T_grid")) {
    if (!j["T_grid"].is_array()) throw ConfigError("T_grid: expected an array");
    c.T_grid.clear();
    for (auto& x : j["T_grid"]) c.T_grid.push_back(get_count(x, "T_grid"));
  }
  if (j.contains("record_timing")) {
    if (!j["record_timing"].is_boolean()) throw ConfigError("record_timing: expected true or false");
    c.record_timing = j["record_timing"].get<bool>();
  }
  return c;
}

inline std::string env_name(const std::string& path) {
  std::string out = "ORME_";
  for (char ch : path) out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

// Replaces any leaf (including whole arrays) whose ORME_<PATH> variable is set.
// Values are parsed as JSON; anything that does not parse is taken as a string.
inline void apply_env_overrides(json& j, const std::function<const char*(const std::string&)>& getenv_fn,
                                const std::string& prefix = "") {
  for (auto& [k, v] : j.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    // An object key is replaced whole first; its leaves can still be overridden.
    if (const char* raw = getenv_fn(env_name(path))) {
      try {
        v = json::parse(raw);
      } catch (const json::exception&) {
        v = std::string(raw);
      }
    }
    if (v.is_object()) apply_env_overrides(v, getenv_fn, path);
  }
}

inline const char* system_getenv(const std::string& name) { return std::getenv(name.c_str()); }

// Defaults, then the user's JSON, then ORME_* environment overrides.
inline ExperimentConfig resolve_config(const json& user,
                                       const std::function<const char*(const std::string&)>& getenv_fn = system_getenv) {
  json merged = config_to_json(config_from_json(user));
  apply_env_overrides(merged, getenv_fn);
  ExperimentConfig c = config_from_json(merged);
  c.validate();
  return c;
}

inline json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::function<const char*(const std::string&)>& getenv_fn = system_getenv) {
  return resolve_config(path.empty() ? json::object() : read_config_file(path), getenv_fn);
}

}  // namespace orme
