#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/kernel.hpp"
#include "periodplr/lightcurve.hpp"
#include "periodplr/rng.hpp"

namespace periodplr {

// sigma(m) = exp(a * m^c - b) + offset (offset 0 / 0.05 / 0.1 for N1-N3).
struct NoiseModel {
  double a = 1.82e-6;
  double b = 5.84;
  double c = 5.0;
  double offset = 0.0;

  double sigma(double m) const {
    const double s = std::exp(a * std::pow(m, c) - b) + offset;
    if (!(s > 0.0)) throw validation_error("NoiseModel: nonpositive sigma at m = " + std::to_string(m));
    return s;
  }
};

enum class CadenceKind { staggered, seasonal, uniform };  // C1, C2, C3

struct CadenceSpec {
  CadenceKind kind = CadenceKind::uniform;
  double span = 1500.0;  // days
  std::vector<int> counts;
  double gap_fraction = 0.3;  // seasonal: masked fraction of each year
  double band_offset = 0.7;   // staggered: bands > 0 start at this fraction of span

  void validate() const {
    if (!(span > 0.0)) throw validation_error("CadenceSpec: span must be > 0");
    if (counts.empty()) throw validation_error("CadenceSpec: counts empty");
    for (int n : counts)
      if (n < 0) throw validation_error("CadenceSpec: counts must be >= 0");
    if (!(gap_fraction >= 0.0 && gap_fraction < 1.0) || !(band_offset >= 0.0 && band_offset < 1.0))
      throw validation_error("CadenceSpec: gap_fraction and band_offset must lie in [0,1)");
  }
};

inline std::vector<std::vector<double>> cadence_times(const CadenceSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  constexpr double year = 365.25;
  std::uniform_real_distribution<double> unif(0.0, spec.span);
  std::vector<std::vector<double>> out(spec.counts.size());
  for (std::size_t b = 0; b < spec.counts.size(); ++b) {
    auto& times = out[b];
    while (static_cast<int>(times.size()) < spec.counts[b]) {
      double t = unif(rng);
      switch (spec.kind) {
        case CadenceKind::uniform:
          break;
        case CadenceKind::seasonal:
          if (std::fmod(t, year) >= (1.0 - spec.gap_fraction) * year) continue;
          break;
        case CadenceKind::staggered:
          if (b > 0 && t < spec.band_offset * spec.span) continue;
          break;
      }
      times.push_back(t);
    }
    std::sort(times.begin(), times.end());
  }
  return out;
}

inline std::vector<std::vector<double>> cadence_times(const CadenceSpec& spec, std::uint64_t seed) {
  auto rng = make_stream(seed, 0xcade);
  return cadence_times(spec, rng);
}

// Generative truth shared by all stars of a dataset.
struct PopulationTruth {
  std::vector<Eigen::Vector3d> alpha;  // per band
  std::vector<double> gamma;           // per band
  Eigen::MatrixXd omega;               // 2B x 2B precision
  std::vector<KernelParams> kernels;   // per band
  double f_min = 1.0 / 1000.0;
  double f_max = 1.0 / 100.0;

  int band_count() const { return static_cast<int>(alpha.size()); }

  void validate() const {
    const int B = band_count();
    if (B < 1 || static_cast<int>(gamma.size()) != B || static_cast<int>(kernels.size()) != B)
      throw validation_error("PopulationTruth: per-band sizes inconsistent");
    for (double g : gamma)
      if (!(g > 0.0)) throw validation_error("PopulationTruth: gamma must be > 0");
    if (omega.rows() != 2 * B || omega.cols() != 2 * B)
      throw validation_error("PopulationTruth: omega must be 2B x 2B");
    if (!(0.0 < f_min && f_min < f_max)) throw validation_error("PopulationTruth: bad frequency range");
    for (const auto& k : kernels) k.validate();
  }
};

struct TruthRecord {
  std::string star_id;
  double f_true = 0.0;
  Eigen::VectorXd m_true;     // per band
  Eigen::VectorXd beta_true;  // stacked 2B
};

namespace detail {

inline Eigen::MatrixXd lower_cholesky(const Eigen::MatrixXd& m, const std::string& what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw validation_error(what + ": matrix not SPD");
  return llt.matrixL();
}

// GP draw of h at the given phases (kernel gram includes the nugget).
inline Eigen::VectorXd draw_gp(const std::vector<double>& phases, const KernelParams& k,
                               std::mt19937_64& rng) {
  const int n = static_cast<int>(phases.size());
  Eigen::MatrixXd H(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q <= p; ++q) {
      const double v = kernel_eval(phases[p], phases[q], k);
      H(p, q) = v;
      H(q, p) = v;
    }
  H.diagonal().array() += 1e-12;
  const Eigen::MatrixXd L = lower_cholesky(H, "draw_gp");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = gauss(rng);
  return L * z;
}

}  // namespace detail

inline std::pair<Dataset, std::vector<TruthRecord>> generate_dataset(
    int N, const PopulationTruth& truth, const CadenceSpec& cadence, const NoiseModel& noise,
    std::uint64_t seed, const std::vector<std::string>& band_names = {}) {
  truth.validate();
  cadence.validate();
  const int B = truth.band_count();
  if (static_cast<int>(cadence.counts.size()) != B)
    throw validation_error("generate_dataset: cadence needs one count per band");
  if (N < 1) throw validation_error("generate_dataset: N must be >= 1");

  Dataset ds;
  ds.band_count = B;
  if (!band_names.empty()) {
    if (static_cast<int>(band_names.size()) != B)
      throw validation_error("generate_dataset: band_names size mismatch");
    ds.band_names = band_names;
  } else {
    for (int b = 0; b < B; ++b) ds.band_names.push_back("band" + std::to_string(b));
  }

  const Eigen::MatrixXd omega_chol =
      detail::lower_cholesky(truth.omega, "generate_dataset: omega");  // of the precision
  std::vector<TruthRecord> truths;
  truths.reserve(N);

  for (int i = 0; i < N; ++i) {
    auto rng = make_stream(seed, 0x5157, static_cast<std::uint64_t>(i) + 1);
    std::uniform_real_distribution<double> funif(truth.f_min, truth.f_max);
    std::normal_distribution<double> gauss(0.0, 1.0);

    TruthRecord tr;
    tr.star_id = "sim" + std::to_string(i);
    tr.f_true = funif(rng);
    const double lf = std::log10(tr.f_true);
    const Eigen::Vector3d d(1.0, lf, lf * lf);

    tr.m_true.resize(B);
    for (int b = 0; b < B; ++b)
      tr.m_true(b) = d.dot(truth.alpha[b]) + gauss(rng) / std::sqrt(truth.gamma[b]);

    // beta ~ N(0, Omega^{-1}): solve L^T beta = z with L the precision factor
    Eigen::VectorXd z(2 * B);
    for (int k = 0; k < 2 * B; ++k) z(k) = gauss(rng);
    tr.beta_true = omega_chol.transpose().triangularView<Eigen::Upper>().solve(z);

    const auto times = cadence_times(cadence, rng);
    StarLightCurve star;
    star.star_id = tr.star_id;
    star.bands.resize(B);
    for (int b = 0; b < B; ++b) {
      std::vector<double> phases;
      for (double t : times[b]) phases.push_back(tr.f_true * t);
      const Eigen::VectorXd h =
          phases.empty() ? Eigen::VectorXd() : detail::draw_gp(phases, truth.kernels[b], rng);
      for (std::size_t j = 0; j < times[b].size(); ++j) {
        const double u = 2.0 * M_PI * phases[j];
        const double s = tr.m_true(b) + tr.beta_true(2 * b) * std::cos(u) +
                         tr.beta_true(2 * b + 1) * std::sin(u) + h(j);
        BandObservation o;
        o.t = times[b][j];
        o.sigma = noise.sigma(s);
        o.y = s + o.sigma * gauss(rng);
        star.bands[b].push_back(o);
      }
    }
    ds.stars.push_back(std::move(star));
    truths.push_back(std::move(tr));
  }
  return {std::move(ds), std::move(truths)};
}

struct SimulationGridSettings {
  int N = 100;
  std::vector<std::pair<int, int>> count_pairs = {{5, 5},   {5, 10},  {5, 20},  {5, 30},  {10, 10},
                                                  {10, 20}, {10, 30}, {20, 20}, {20, 30}, {30, 30}};
  std::vector<CadenceKind> cadences = {CadenceKind::staggered, CadenceKind::seasonal,
                                       CadenceKind::uniform};
  std::vector<double> noise_offsets = {0.0, 0.05, 0.1};  // N1, N2, N3
  double span = 1500.0;
  std::uint64_t seed = 0;
};

struct SimulatedDataset {
  std::string label;
  Dataset dataset;
  std::vector<TruthRecord> truths;
};

inline std::string cadence_name(CadenceKind k) {
  switch (k) {
    case CadenceKind::staggered: return "C1";
    case CadenceKind::seasonal: return "C2";
    case CadenceKind::uniform: return "C3";
  }
  return "?";
}

// The full factorial: count pairs x cadences x noise levels (10*3*3 = 90
// with the defaults). The pair is (n for band 1, n for band 0), matching
// the convention that the second band is the sparser one.
inline std::vector<SimulatedDataset> simulation_grid(const PopulationTruth& truth,
                                                     const SimulationGridSettings& settings) {
  if (truth.band_count() != 2) throw validation_error("simulation_grid: the grid is defined for B = 2");
  std::vector<SimulatedDataset> out;
  std::uint64_t index = 0;
  for (const auto& [n_second, n_first] : settings.count_pairs)
    for (CadenceKind ck : settings.cadences)
      for (std::size_t ni = 0; ni < settings.noise_offsets.size(); ++ni) {
        CadenceSpec cadence;
        cadence.kind = ck;
        cadence.span = settings.span;
        cadence.counts = {n_first, n_second};
        NoiseModel noise;
        noise.offset = settings.noise_offsets[ni];
        SimulatedDataset sd;
        sd.label = "n" + std::to_string(n_second) + "-" + std::to_string(n_first) + "_" +
                   cadence_name(ck) + "_N" + std::to_string(ni + 1);
        std::tie(sd.dataset, sd.truths) =
            generate_dataset(settings.N, truth, cadence, noise, mix_seed(settings.seed, 0x9d, ++index));
        out.push_back(std::move(sd));
      }
  return out;
}

inline void save_truths_csv(const std::vector<TruthRecord>& truths,
                            const std::vector<std::string>& band_names, const std::string& path,
                            const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write truths file: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "star_id,f_true";
  for (const auto& b : band_names) out << ",m_true_" << b;
  out << "\n";
  out.precision(17);
  for (const auto& tr : truths) {
    out << tr.star_id << ',' << tr.f_true;
    for (int b = 0; b < tr.m_true.size(); ++b) out << ',' << tr.m_true(b);
    out << '\n';
  }
}

inline std::vector<TruthRecord> load_truths_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open truths file: " + path);
  std::vector<TruthRecord> out;
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string field;
    TruthRecord tr;
    if (!std::getline(ss, tr.star_id, ',') || !std::getline(ss, field, ','))
      throw io_error("malformed truths row at line " + std::to_string(line_no));
    std::vector<double> ms;
    try {
      tr.f_true = std::stod(field);
      while (std::getline(ss, field, ',')) ms.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw io_error("unparsable truths field at line " + std::to_string(line_no));
    }
    tr.m_true = Eigen::Map<Eigen::VectorXd>(ms.data(), static_cast<int>(ms.size()));
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace periodplr
