#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "snellmesh/builtins.hpp"
#include "snellmesh/errors.hpp"
#include "snellmesh/model.hpp"
#include "snellmesh/report.hpp"

// Model definition files (JSON, schema_version 1).
//
//   {
//     "schema_version": 1,
//     "name": "toy",
//     "horizon": 2,
//     "spaces": {"kind": "finite", "size": 2},        // or one object per k
//     "initial": [1, 0],                              // finite; {"mean": m, "std": s} for continuous
//     "transition": {"matrix": [[0.5, 0.5], [0.2, 0.8]]},   // or "matrices": [...], or
//                   {"family": "ar1", "a": 0.5, "sigma": 1}
//     "payoff": {"tables": [[0, 0], [0, 0], [1, 2]]},  // or "table": [...], or {"preset": "put", "strike": 1}
//     "criteria": {"table": [0.5, 1]},                 // optional, default G = 1
//     "epsilon": 0                                      // scalar or one value per k < n
//   }
namespace snell {

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

inline double get_number(const json& obj, const std::string& key, const std::string& where,
                         std::optional<double> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing key '" + key + "'");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline Eigen::VectorXd to_vector(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number");
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  return out;
}

inline Eigen::MatrixXd to_matrix(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto first = to_vector(v[0], where + "[0]");
  Eigen::MatrixXd m(rows, first.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = to_vector(v[static_cast<std::size_t>(r)], where + "[" + std::to_string(r) + "]");
    if (row.size() != first.size()) throw ConfigError(where + ": ragged matrix");
    m.row(r) = row.transpose();
  }
  return m;
}

// "tables": one per step, or "table": the same for every step.
inline std::vector<Eigen::VectorXd> step_tables(const json& obj, std::size_t count, const std::string& where) {
  std::vector<Eigen::VectorXd> out;
  if (obj.contains("tables")) {
    const auto& t = obj.at("tables");
    if (!t.is_array() || t.size() != count)
      throw ConfigError(where + ".tables: expected " + std::to_string(count) + " tables");
    for (std::size_t k = 0; k < count; ++k) out.push_back(to_vector(t[k], where + ".tables[" + std::to_string(k) + "]"));
  } else if (obj.contains("table")) {
    out.assign(count, to_vector(obj.at("table"), where + ".table"));
  } else {
    throw ConfigError(where + ": expected 'table' or 'tables'");
  }
  return out;
}

inline std::vector<double> epsilon_levels(const json& root, std::size_t n) {
  if (!root.contains("epsilon")) return std::vector<double>(n, 0.0);
  const auto& e = root.at("epsilon");
  if (e.is_number()) return std::vector<double>(n, e.get<double>());
  const auto v = to_vector(e, "epsilon");
  if (static_cast<std::size_t>(v.size()) != n) throw ConfigError("epsilon: expected " + std::to_string(n) + " levels");
  return {v.data(), v.data() + v.size()};
}

inline MarkovModel finite_model_from_json(const json& root, std::size_t n) {
  FiniteChainSpec spec;
  spec.name = root.value("name", std::string("finite"));
  if (!root.contains("initial")) throw ConfigError("model: missing key 'initial'");
  spec.initial = to_vector(root.at("initial"), "initial");

  const auto& tr = root.at("transition");
  check_keys(tr, "transition", {"matrix", "matrices"});
  if (tr.contains("matrices")) {
    const auto& ms = tr.at("matrices");
    if (!ms.is_array() || ms.size() != n) throw ConfigError("transition.matrices: expected " + std::to_string(n) + " matrices");
    for (std::size_t k = 0; k < n; ++k) spec.transitions.push_back(to_matrix(ms[k], "transition.matrices[" + std::to_string(k) + "]"));
  } else if (tr.contains("matrix")) {
    spec.transitions.assign(n, to_matrix(tr.at("matrix"), "transition.matrix"));
  } else {
    throw ConfigError("transition: expected 'matrix' or 'matrices'");
  }

  const auto& pay = root.at("payoff");
  check_keys(pay, "payoff", {"table", "tables"});
  spec.payoffs = step_tables(pay, n + 1, "payoff");

  if (root.contains("criteria")) {
    const auto& cr = root.at("criteria");
    check_keys(cr, "criteria", {"table", "tables"});
    spec.criteria = step_tables(cr, n, "criteria");
  } else {
    for (std::size_t k = 0; k < n; ++k) spec.criteria.push_back(Eigen::VectorXd::Ones(spec.payoffs[k].size()));
  }
  spec.epsilon = epsilon_levels(root, n);

  try {
    MarkovModel m = make_finite_model(std::move(spec));
    if (root.contains("spaces")) {
      const auto& sp = root.at("spaces");
      for (std::size_t k = 0; k <= n; ++k) {
        const auto& s = sp.is_array() ? sp.at(k) : sp;
        check_keys(s, "spaces", {"kind", "size"});
        if (s.value("kind", std::string("finite")) != "finite" ||
            static_cast<std::size_t>(get_number(s, "size", "spaces")) != m.spaces[k].size)
          throw ConfigError("spaces: declaration does not match the tables at k=" + std::to_string(k));
      }
    }
    return m;
  } catch (const ContractError& e) {
    throw ConfigError(std::string("model tables: ") + e.what());
  }
}

inline MarkovModel continuous_model_from_json(const json& root, std::size_t n) {
  const auto& tr = root.at("transition");
  check_keys(tr, "transition", {"family", "a", "sigma"});
  if (tr.value("family", std::string()) != "ar1") throw ConfigError("transition.family: only 'ar1' is supported");
  Ar1Params params;
  params.horizon = n;
  params.a = get_number(tr, "a", "transition");
  params.sigma = get_number(tr, "sigma", "transition");
  if (root.contains("initial")) {
    const auto& init = root.at("initial");
    check_keys(init, "initial", {"mean", "std"});
    params.initial_mean = get_number(init, "mean", "initial", 0.0);
    params.initial_std = get_number(init, "std", "initial", 0.0);
  }
  Ar1Payoff payoff;
  const auto& pay = root.at("payoff");
  check_keys(pay, "payoff", {"preset", "strike"});
  payoff.preset = pay.value("preset", std::string("put"));
  payoff.strike = get_number(pay, "strike", "payoff", 0.0);
  Ar1Criteria criteria;
  if (root.contains("criteria")) {
    const auto& cr = root.at("criteria");
    check_keys(cr, "criteria", {"preset", "rate", "beta", "barrier"});
    criteria.preset = cr.value("preset", std::string("none"));
    criteria.rate = get_number(cr, "rate", "criteria", 0.0);
    criteria.beta = get_number(cr, "beta", "criteria", 0.0);
    criteria.barrier = get_number(cr, "barrier", "criteria", 0.0);
  }
  try {
    MarkovModel m = build_gaussian_ar1(params, payoff, criteria, epsilon_levels(root, n));
    m.name = root.value("name", std::string("ar1"));
    return m;
  } catch (const ContractError& e) {
    throw ConfigError(std::string("ar1 model: ") + e.what());
  }
}

}  // namespace detail

inline MarkovModel model_from_json(const nlohmann::json& root) {
  using detail::check_keys;
  check_keys(root, "model",
             {"schema_version", "name", "horizon", "spaces", "initial", "transition", "payoff", "criteria", "epsilon"});
  if (root.contains("schema_version") &&
      (!root.at("schema_version").is_number_integer() || root.at("schema_version").get<int>() != 1))
    throw ConfigError("model.schema_version: only version 1 is supported");
  if (!root.contains("horizon") || !root.at("horizon").is_number_unsigned())
    throw ConfigError("model.horizon: expected a non-negative integer");
  if (!root.contains("transition")) throw ConfigError("model: missing key 'transition'");
  if (!root.contains("payoff")) throw ConfigError("model: missing key 'payoff'");
  const auto n = root.at("horizon").get<std::size_t>();
  if (root.at("transition").contains("family")) return detail::continuous_model_from_json(root, n);
  return detail::finite_model_from_json(root, n);
}

inline MarkovModel load_model_file(const std::filesystem::path& path) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(report::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return model_from_json(root);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline bool is_builtin_model(const std::string& name) {
  return name == "toychain" || name == "ar1" || name == "indicator";
}

/// Builtins: `toychain`; `ar1` (n=3, a=0.5, sigma=1, X_0=1, put strike 1,
/// discount r=0.05); `indicator` (5 steps, survival 0.2 per step).
inline MarkovModel builtin_model(const std::string& name) {
  if (name == "toychain") return toychain();
  if (name == "indicator") return indicator_chain();
  if (name == "ar1") {
    Ar1Params params;
    params.initial_mean = 1.0;
    Ar1Payoff payoff{"put", 1.0, {}};
    Ar1Criteria criteria;
    criteria.preset = "discount";
    criteria.rate = 0.05;
    return build_gaussian_ar1(params, payoff, criteria);
  }
  throw ConfigError("unknown builtin model '" + name + "'");
}

inline MarkovModel resolve_model(const std::string& source) {
  return is_builtin_model(source) ? builtin_model(source) : load_model_file(source);
}

}  // namespace snell
