#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "periodplr/global.hpp"

namespace periodplr {

inline std::uint64_t fnv1a_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const int r = static_cast<int>(j.size());
  const int c = r > 0 ? static_cast<int>(j[0].size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace detail

struct Checkpoint {
  GlobalState state;
  int iteration = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string version = "periodplr-1";
};

// Streams are re-derived from (seed, iteration, star), so the canonical
// parameters plus the iteration counter are sufficient for bit-identical
// resumption.
inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  nlohmann::json j;
  j["version"] = cp.version;
  j["iteration"] = cp.iteration;
  j["seed"] = cp.seed;
  j["config_hash"] = cp.config_hash;
  j["alpha"] = nlohmann::json::array();
  for (const auto& a : cp.state.alpha)
    j["alpha"].push_back({{"eta1", detail::matrix_to_json(a.eta1)}, {"eta2", detail::vector_to_json(a.eta2)}});
  j["gamma"] = nlohmann::json::array();
  for (const auto& g : cp.state.gamma) j["gamma"].push_back({{"eta1", g.eta1}, {"eta2", g.eta2}});
  j["omega"] = {{"eta1", detail::matrix_to_json(cp.state.omega.eta1)}, {"eta2", cp.state.omega.eta2}};

  std::ofstream out(path);
  if (!out) throw io_error("cannot write checkpoint: " + path);
  out.precision(17);
  out << j.dump(1);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw io_error(std::string("checkpoint parse error: ") + e.what());
  }
  Checkpoint cp;
  cp.version = j.at("version").get<std::string>();
  cp.iteration = j.at("iteration").get<int>();
  cp.seed = j.at("seed").get<std::uint64_t>();
  cp.config_hash = j.at("config_hash").get<std::uint64_t>();
  for (const auto& a : j.at("alpha"))
    cp.state.alpha.push_back({detail::matrix_from_json(a.at("eta1")), detail::vector_from_json(a.at("eta2"))});
  for (const auto& g : j.at("gamma"))
    cp.state.gamma.push_back({g.at("eta1").get<double>(), g.at("eta2").get<double>()});
  cp.state.omega.eta1 = detail::matrix_from_json(j.at("omega").at("eta1"));
  cp.state.omega.eta2 = j.at("omega").at("eta2").get<double>();
  return cp;
}

}  // namespace periodplr
