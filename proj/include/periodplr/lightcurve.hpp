#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "periodplr/errors.hpp"
#include "periodplr/rng.hpp"

namespace periodplr {

// One photometric measurement: epoch (days), magnitude, uncertainty (mag).
struct BandObservation {
  double t = 0.0;
  double y = 0.0;
  double sigma = 0.0;
};

// All observations of one star, indexed by band. Bands may be empty.
struct StarLightCurve {
  std::string star_id;
  std::vector<std::vector<BandObservation>> bands;

  int band_count() const { return static_cast<int>(bands.size()); }
  int n_obs(int b) const { return static_cast<int>(bands[b].size()); }
  int total_obs() const {
    int n = 0;
    for (const auto& v : bands) n += static_cast<int>(v.size());
    return n;
  }
};

struct Dataset {
  std::vector<StarLightCurve> stars;
  int band_count = 0;
  std::vector<std::string> band_names;

  int size() const { return static_cast<int>(stars.size()); }
};

// Index layout of the stacked per-star parameter vector (dim 3B).
// Band b occupies rows [3b, 3b+3): mean magnitude, then the two
// sinusoid coefficients. mean_slots are the magnitude positions,
// beta_slots the rest (paired with the 2B-dim precision matrix).
struct ThetaLayout {
  int B = 0;
  std::vector<int> mean_slots;  // size B
  std::vector<int> beta_slots;  // size 2B

  int dim() const { return 3 * B; }
  int mean_slot(int b) const { return 3 * b; }
  // beta component c in {0,1} of band b -> theta row
  int beta_slot(int b, int c) const { return 3 * b + 1 + c; }
  // beta component c of band b -> row/col in the 2B-dim beta block
  static int beta_pack(int b, int c) { return 2 * b + c; }
};

inline ThetaLayout theta_layout(int B) {
  if (B < 1) throw validation_error("theta_layout: band count must be >= 1");
  ThetaLayout lo;
  lo.B = B;
  for (int b = 0; b < B; ++b) {
    lo.mean_slots.push_back(3 * b);
    lo.beta_slots.push_back(3 * b + 1);
    lo.beta_slots.push_back(3 * b + 2);
  }
  return lo;
}

// Equally spaced search grid in cycles/day, endpoints inclusive.
struct FrequencyGrid {
  double f_min = 1.0 / 1000.0;
  double f_max = 1.0 / 100.0;
  int n_points = 500;

  double delta() const { return (f_max - f_min) / (n_points - 1); }
  double value(int k) const { return f_min + delta() * k; }

  void validate() const {
    if (!(0.0 < f_min && f_min < f_max) || n_points < 2)
      throw validation_error("FrequencyGrid: need 0 < f_min < f_max and n_points >= 2");
  }
};

namespace detail {

inline void sort_and_dedup(std::vector<BandObservation>& obs) {
  std::sort(obs.begin(), obs.end(), [](const BandObservation& a, const BandObservation& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    return a.sigma < b.sigma;
  });
  obs.erase(std::unique(obs.begin(), obs.end(),
                        [](const BandObservation& a, const BandObservation& b) {
                          return a.t == b.t && a.y == b.y && a.sigma == b.sigma;
                        }),
            obs.end());
}

inline void validate_observation(const BandObservation& o, const std::string& where) {
  if (!std::isfinite(o.t) || !std::isfinite(o.y))
    throw validation_error("non-finite time/magnitude at " + where);
  if (!(o.sigma > 0.0)) throw validation_error("err must be > 0 at " + where);
}

}  // namespace detail

enum class DatasetFormat { csv, json };

// CSV schema: header star_id,band,t,mag,err. Lines beginning with '#'
// are treated as comments (output files carry a provenance header).
inline Dataset load_dataset_csv(std::istream& in, const std::vector<std::string>& band_manifest = {}) {
  Dataset ds;
  std::map<std::string, int> band_index;
  for (std::size_t i = 0; i < band_manifest.size(); ++i) band_index[band_manifest[i]] = static_cast<int>(i);
  ds.band_names = band_manifest;

  std::map<std::string, int> star_index;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // first non-comment line is the header
      continue;
    }
    std::istringstream ss(line);
    std::string star_id, band, t_s, mag_s, err_s;
    if (!std::getline(ss, star_id, ',') || !std::getline(ss, band, ',') ||
        !std::getline(ss, t_s, ',') || !std::getline(ss, mag_s, ',') || !std::getline(ss, err_s))
      throw io_error("malformed CSV row at line " + std::to_string(line_no));
    BandObservation o;
    try {
      o.t = std::stod(t_s);
      o.y = std::stod(mag_s);
      o.sigma = std::stod(err_s);
    } catch (const std::exception&) {
      throw io_error("unparsable numeric field at line " + std::to_string(line_no));
    }
    detail::validate_observation(o, "star " + star_id + " band " + band + " line " + std::to_string(line_no));

    auto [bit, binserted] = band_index.try_emplace(band, static_cast<int>(ds.band_names.size()));
    if (binserted) {
      if (!band_manifest.empty())
        throw validation_error("band '" + band + "' not in manifest (line " + std::to_string(line_no) + ")");
      ds.band_names.push_back(band);
    }
    auto [sit, sinserted] = star_index.try_emplace(star_id, static_cast<int>(ds.stars.size()));
    if (sinserted) {
      StarLightCurve s;
      s.star_id = star_id;
      ds.stars.push_back(std::move(s));
    }
    auto& star = ds.stars[sit->second];
    if (static_cast<int>(star.bands.size()) <= bit->second) star.bands.resize(bit->second + 1);
    star.bands[bit->second].push_back(o);
  }
  ds.band_count = static_cast<int>(ds.band_names.size());
  for (auto& s : ds.stars) {
    s.bands.resize(ds.band_count);
    for (auto& b : s.bands) detail::sort_and_dedup(b);
  }
  return ds;
}

inline Dataset load_dataset_json(std::istream& in, const std::vector<std::string>& band_manifest = {}) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw io_error(std::string("JSON parse error: ") + e.what());
  }
  Dataset ds;
  ds.band_names = band_manifest;
  std::map<std::string, int> band_index;
  for (std::size_t i = 0; i < band_manifest.size(); ++i) band_index[band_manifest[i]] = static_cast<int>(i);

  for (const auto& star_j : j) {
    StarLightCurve s;
    s.star_id = star_j.at("star_id").get<std::string>();
    for (auto it = star_j.at("bands").begin(); it != star_j.at("bands").end(); ++it) {
      auto [bit, inserted] = band_index.try_emplace(it.key(), static_cast<int>(ds.band_names.size()));
      if (inserted) {
        if (!band_manifest.empty()) throw validation_error("band '" + it.key() + "' not in manifest");
        ds.band_names.push_back(it.key());
      }
      const auto& bj = it.value();
      const auto& t = bj.at("t");
      const auto& mag = bj.at("mag");
      const auto& err = bj.at("err");
      if (t.size() != mag.size() || t.size() != err.size())
        throw validation_error("band arrays length mismatch for star " + s.star_id);
      if (static_cast<int>(s.bands.size()) <= bit->second) s.bands.resize(bit->second + 1);
      for (std::size_t k = 0; k < t.size(); ++k) {
        BandObservation o{t[k].get<double>(), mag[k].get<double>(), err[k].get<double>()};
        detail::validate_observation(o, "star " + s.star_id + " band " + it.key() + " row " + std::to_string(k));
        s.bands[bit->second].push_back(o);
      }
    }
    ds.stars.push_back(std::move(s));
  }
  ds.band_count = static_cast<int>(ds.band_names.size());
  for (auto& s : ds.stars) {
    s.bands.resize(ds.band_count);
    for (auto& b : s.bands) detail::sort_and_dedup(b);
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path, DatasetFormat format,
                            const std::vector<std::string>& band_manifest = {}) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open dataset file: " + path);
  return format == DatasetFormat::csv ? load_dataset_csv(in, band_manifest)
                                      : load_dataset_json(in, band_manifest);
}

inline void save_dataset_csv(const Dataset& ds, std::ostream& out, const std::string& header_comment = "") {
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "star_id,band,t,mag,err\n";
  out.precision(17);
  for (const auto& s : ds.stars)
    for (int b = 0; b < ds.band_count; ++b)
      for (const auto& o : s.bands[b])
        out << s.star_id << ',' << ds.band_names[b] << ',' << o.t << ',' << o.y << ',' << o.sigma << '\n';
}

inline void save_dataset_csv(const Dataset& ds, const std::string& path, const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write dataset file: " + path);
  save_dataset_csv(ds, out, header_comment);
}

// Star subsampling plus per-band observation caps, both without
// replacement. Within-band time order is preserved.
inline Dataset downsample(const Dataset& ds, int star_budget, const std::vector<int>& per_band_caps,
                          std::uint64_t seed) {
  if (star_budget > ds.size()) throw validation_error("downsample: star budget exceeds dataset size");
  if (static_cast<int>(per_band_caps.size()) != ds.band_count)
    throw validation_error("downsample: need one cap per band");
  for (int c : per_band_caps)
    if (c < 0) throw validation_error("downsample: caps must be >= 0");

  auto rng = make_stream(seed, 0xd05a);
  std::vector<int> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(star_budget);
  std::sort(order.begin(), order.end());

  Dataset out;
  out.band_count = ds.band_count;
  out.band_names = ds.band_names;
  for (int idx : order) {
    const auto& src = ds.stars[idx];
    StarLightCurve s;
    s.star_id = src.star_id;
    s.bands.resize(ds.band_count);
    for (int b = 0; b < ds.band_count; ++b) {
      const int n = src.n_obs(b);
      const int keep = std::min(n, per_band_caps[b]);
      std::vector<int> pick(n);
      std::iota(pick.begin(), pick.end(), 0);
      auto band_rng = make_stream(seed, static_cast<std::uint64_t>(idx) + 1, static_cast<std::uint64_t>(b) + 1);
      std::shuffle(pick.begin(), pick.end(), band_rng);
      pick.resize(keep);
      std::sort(pick.begin(), pick.end());
      for (int k : pick) s.bands[b].push_back(src.bands[b][k]);
    }
    out.stars.push_back(std::move(s));
  }
  return out;
}

}  // namespace periodplr
