#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "periodplr/baselines.hpp"
#include "periodplr/checkpoint.hpp"
#include "periodplr/downsample_eval.hpp"
#include "periodplr/estimates.hpp"
#include "periodplr/global.hpp"
#include "periodplr/plr.hpp"
#include "periodplr/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace periodplr;

namespace {

constexpr const char* kVersion = "periodplr-1";

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw io_error(std::string("config parse error: ") + e.what());
  }
  return j;
}

std::string header_for(const json& config) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a_hash(config.dump())));
  return std::string("config-hash=") + buf + " version=" + kVersion;
}

Eigen::MatrixXd json_matrix(const json& j) {
  const int r = static_cast<int>(j.size());
  const int c = r > 0 ? static_cast<int>(j[0].size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

std::vector<std::string> band_manifest(const json& config) {
  std::vector<std::string> bands;
  if (config.contains("bands"))
    for (const auto& b : config["bands"]) bands.push_back(b.get<std::string>());
  return bands;
}

DatasetFormat dataset_format(const std::string& path) {
  return path.size() >= 5 && path.substr(path.size() - 5) == ".json" ? DatasetFormat::json
                                                                     : DatasetFormat::csv;
}

HyperParams hyper_from_config(const json& config, int B) {
  HyperParams hp;
  const json h = config.value("hyper", json::object());
  if (h.contains("alpha_bar")) {
    for (const auto& a : h["alpha_bar"])
      hp.alpha_bar.emplace_back(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  } else {
    hp.alpha_bar.assign(B, Eigen::Vector3d::Zero());
  }
  hp.delta_bar = h.value("delta_bar", 1.0);
  if (h.contains("gamma_bar"))
    for (const auto& g : h["gamma_bar"]) hp.gamma_bar.push_back(g.get<double>());
  else
    hp.gamma_bar.assign(B, 25.0);
  hp.r_bar = h.value("r_bar", 1.0);
  hp.omega_bar = h.contains("omega_bar") ? json_matrix(h["omega_bar"])
                                         : Eigen::MatrixXd(Eigen::MatrixXd::Identity(2 * B, 2 * B));
  hp.n_bar = h.value("n_bar", 1.0);
  hp.validate();
  if (hp.band_count() != B) throw validation_error("config: hyperparameter band count mismatch");
  return hp;
}

std::vector<KernelParams> kernels_from_config(const json& config, int B) {
  std::vector<KernelParams> ks;
  if (config.contains("kernels")) {
    for (const auto& k : config["kernels"])
      ks.push_back({k.value("tau1", 0.01), k.value("tau2", 0.05), k.value("tau3", 0.01)});
  } else {
    ks.assign(B, KernelParams{});
  }
  if (static_cast<int>(ks.size()) != B) throw validation_error("config: kernel band count mismatch");
  for (const auto& k : ks) k.validate();
  return ks;
}

FitConfig fit_from_config(const json& config) {
  FitConfig fc;
  const json f = config.value("fit", json::object());
  fc.c1 = f.value("c1", 1500.0);
  fc.c2 = f.value("c2", 0.75);
  fc.batch_size = f.value("batch_size", 8);
  fc.iterations = f.value("iterations", 1000);
  fc.seed = f.value("seed", std::uint64_t{0});
  fc.threads = f.value("threads", 1);
  fc.grid.f_min = f.value("f_min", 1.0 / 1000.0);
  fc.grid.f_max = f.value("f_max", 1.0 / 100.0);
  fc.grid.n_points = f.value("n_points", 500);
  fc.validate();
  return fc;
}

CadenceKind cadence_kind(const std::string& name) {
  if (name == "C1" || name == "staggered") return CadenceKind::staggered;
  if (name == "C2" || name == "seasonal") return CadenceKind::seasonal;
  if (name == "C3" || name == "uniform") return CadenceKind::uniform;
  throw validation_error("unknown cadence: " + name);
}

PopulationTruth truth_from_config(const json& sim) {
  PopulationTruth truth;
  if (sim.contains("truth")) {
    const json t = sim["truth"];
    for (const auto& a : t["alpha"])
      truth.alpha.emplace_back(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    for (const auto& g : t["gamma"]) truth.gamma.push_back(g.get<double>());
    truth.omega = json_matrix(t["omega"]);
    if (t.contains("kernels"))
      for (const auto& k : t["kernels"])
        truth.kernels.push_back({k["tau1"].get<double>(), k["tau2"].get<double>(), k["tau3"].get<double>()});
    else
      truth.kernels.assign(truth.alpha.size(), KernelParams{0.005, 0.05, 0.005});
    truth.f_min = t.value("f_min", 1.0 / 1000.0);
    truth.f_max = t.value("f_max", 1.0 / 100.0);
  } else {
    // two near-infrared-like bands on a shifted LMC-shaped PLR
    truth.alpha = {a_to_alpha({18.23, -3.59, -3.40}), a_to_alpha({17.86, -3.77, -2.23})};
    truth.gamma = {44.0, 44.0};
    truth.omega = 8.0 * Eigen::MatrixXd::Identity(4, 4);
    truth.kernels.assign(2, KernelParams{0.005, 0.05, 0.005});
  }
  truth.validate();
  return truth;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write file: " + path.string());
  out << content;
}

int cmd_simulate(const json& config, const std::string& out_dir) {
  const json sim = config.value("simulate", json::object());
  const std::string header = header_for(config);
  fs::create_directories(out_dir);
  const PopulationTruth truth = truth_from_config(sim);

  if (sim.value("grid", false)) {
    SimulationGridSettings settings;
    settings.N = sim.value("N", 100);
    settings.span = sim.value("span", 1500.0);
    settings.seed = sim.value("seed", std::uint64_t{0});
    const auto grid = simulation_grid(truth, settings);
    for (const auto& sd : grid) {
      save_dataset_csv(sd.dataset, (fs::path(out_dir) / ("dataset_" + sd.label + ".csv")).string(), header);
      save_truths_csv(sd.truths, sd.dataset.band_names,
                      (fs::path(out_dir) / ("truths_" + sd.label + ".csv")).string(), header);
    }
    std::cerr << "simulate: wrote " << grid.size() << " datasets to " << out_dir << "\n";
    return 0;
  }

  CadenceSpec cadence;
  cadence.kind = cadence_kind(sim.value("cadence", std::string("C3")));
  cadence.span = sim.value("span", 1500.0);
  if (sim.contains("counts"))
    for (const auto& c : sim["counts"]) cadence.counts.push_back(c.get<int>());
  else
    cadence.counts.assign(truth.band_count(), 30);
  NoiseModel noise;
  noise.offset = sim.value("noise_offset", 0.0);

  std::vector<std::string> names = band_manifest(config);
  auto [ds, truths] = generate_dataset(sim.value("N", 100), truth, cadence, noise,
                                       sim.value("seed", std::uint64_t{0}), names);
  save_dataset_csv(ds, (fs::path(out_dir) / "dataset.csv").string(), header);
  save_truths_csv(truths, ds.band_names, (fs::path(out_dir) / "truths.csv").string(), header);
  std::cerr << "simulate: wrote " << ds.size() << " stars to " << out_dir << "\n";
  return 0;
}

int cmd_init(const json& config, const std::string& dataset_path, const std::string& out_dir) {
  const Dataset full = load_dataset(dataset_path, dataset_format(dataset_path), band_manifest(config));
  if (full.size() == 0) throw validation_error("init: dataset is empty");
  const int B = full.band_count;
  const FitConfig fc = fit_from_config(config);
  const json init = config.value("init", json::object());
  const std::uint64_t seed = init.value("seed", std::uint64_t{0});
  const int subset_size = std::min(init.value("subset", 100), full.size());

  // seeded star subsample
  auto rng = make_stream(seed, 0x1417);
  std::vector<int> order(full.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset subset;
  subset.band_count = B;
  subset.band_names = full.band_names;
  for (int i = 0; i < subset_size; ++i) subset.stars.push_back(full.stars[order[i]]);

  std::vector<double> slope1(B, 0.0), slope2(B, 0.0);
  if (config.contains("hyper") && config["hyper"].contains("alpha_bar")) {
    const auto& ab = config["hyper"]["alpha_bar"];
    for (int b = 0; b < B; ++b) {
      slope1[b] = ab[b][1].get<double>();
      slope2[b] = ab[b][2].get<double>();
    }
  }
  const auto intercepts = init_alpha_intercepts(subset, fc.grid, slope1, slope2);

  // pooled sinusoid residuals per band at the MGLS frequency
  std::vector<std::vector<ResidualCurve>> curves(B);
  for (const auto& star : subset.stars) {
    Periodogram pg;
    try {
      pg = mgls(star, fc.grid);
    } catch (const validation_error&) {
      continue;
    }
    for (int b = 0; b < B; ++b) {
      if (star.n_obs(b) < 4) continue;
      const auto fit = detail::gls_fit_at(star.bands[b], pg.best_f);
      if (!fit.ok) continue;
      ResidualCurve rc;
      rc.residuals.resize(star.n_obs(b));
      for (int j = 0; j < star.n_obs(b); ++j) {
        const auto& o = star.bands[b][j];
        const double u = 2.0 * M_PI * pg.best_f * o.t;
        rc.phases.push_back(pg.best_f * o.t);
        rc.sigmas.push_back(o.sigma);
        rc.residuals(j) = o.y - fit.coef(0) - fit.coef(1) * std::cos(u) - fit.coef(2) * std::sin(u);
      }
      curves[b].push_back(std::move(rc));
    }
  }

  json out;
  out["alpha_bar"] = json::array();
  out["kernels"] = json::array();
  for (int b = 0; b < B; ++b) {
    if (!intercepts[b])
      throw validation_error("init: no usable stars for band " + full.band_names[b]);
    out["alpha_bar"].push_back({*intercepts[b], slope1[b], slope2[b]});
    const KernelParams k = fit_kernel_mle(curves[b], mix_seed(seed, 0x6b, b));
    out["kernels"].push_back({{"tau1", k.tau1}, {"tau2", k.tau2}, {"tau3", k.tau3}});
  }

  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "init.json", "// " + header_for(config) + "\n" + out.dump(1) + "\n");
  std::cerr << "init: wrote " << (fs::path(out_dir) / "init.json").string() << "\n";
  return 0;
}

int cmd_fit(const json& config, const std::string& dataset_path, const std::string& out_dir,
            const std::string& resume_path, bool dump_densities) {
  const Dataset ds = load_dataset(dataset_path, dataset_format(dataset_path), band_manifest(config));
  if (ds.size() == 0) throw validation_error("fit: dataset is empty");
  const int B = ds.band_count;
  const HyperParams hp = hyper_from_config(config, B);
  const auto kernels = kernels_from_config(config, B);
  const FitConfig fc = fit_from_config(config);
  const std::string header = header_for(config);
  const std::uint64_t config_hash = fnv1a_hash(config.dump());

  GlobalState resume_state;
  GlobalState* resume_ptr = nullptr;
  int start_iteration = 0;
  if (!resume_path.empty()) {
    const Checkpoint cp = load_checkpoint(resume_path);
    if (cp.config_hash != config_hash)
      throw validation_error("fit: checkpoint config hash does not match the supplied config");
    resume_state = cp.state;
    resume_ptr = &resume_state;
    start_iteration = cp.iteration;
  }

  const auto progress = [&](int t, const GlobalState&) {
    if (t % 100 == 0) std::cerr << "fit: iteration " << t << "/" << fc.iterations << "\n";
  };
  const SviResult result = run_svi(ds, hp, kernels, fc, progress, resume_ptr, start_iteration);

  fs::create_directories(out_dir);
  Checkpoint cp;
  cp.state = result.globals;
  cp.iteration = fc.iterations;
  cp.seed = fc.seed;
  cp.config_hash = config_hash;
  save_checkpoint(cp, (fs::path(out_dir) / "checkpoint.json").string());

  std::vector<StarEstimate> estimates;
  for (int i = 0; i < ds.size(); ++i)
    estimates.push_back(make_star_estimate(ds.stars[i], result.locals[i]));
  save_estimates_csv(estimates, ds.band_names, (fs::path(out_dir) / "estimates.csv").string(), header);

  if (dump_densities) {
    const fs::path ddir = fs::path(out_dir) / "densities";
    fs::create_directories(ddir);
    for (int i = 0; i < ds.size(); ++i)
      save_density(result.locals[i], (ddir / (ds.stars[i].star_id + ".csv")).string(), header);
  }
  std::cerr << "fit: wrote outputs for " << ds.size() << " stars to " << out_dir << "\n";
  return 0;
}

int cmd_report(const json& config, const std::string& estimates_path, const std::string& truths_path,
               const std::string& out_dir) {
  const auto estimates = load_estimates_csv(estimates_path);
  if (estimates.empty()) throw validation_error("report: no estimates loaded");
  const std::string header = header_for(config);
  fs::create_directories(out_dir);
  const int B = static_cast<int>(estimates.front().m_hat.size());

  std::ostringstream metrics;
  metrics << "# " << header << "\nmetric,value\n";
  if (!truths_path.empty()) {
    const auto truths = load_truths_csv(truths_path);
    std::map<std::string, double> f_true;
    for (const auto& t : truths) f_true[t.star_id] = t.f_true;
    std::vector<double> est_f, tru_f;
    std::vector<std::vector<FrequencyInterval>> sets;
    for (const auto& e : estimates) {
      auto it = f_true.find(e.star_id);
      if (it == f_true.end()) continue;
      est_f.push_back(e.f_hat);
      tru_f.push_back(it->second);
      auto cs = e.conf_sets.find(0.95);
      sets.push_back(cs != e.conf_sets.end() ? cs->second : std::vector<FrequencyInterval>{});
    }
    if (est_f.empty()) throw validation_error("report: no stars matched between estimates and truths");
    metrics << "rr," << recovery_rate(est_f, tru_f) << "\n";
    metrics << "ade," << ade(est_f, tru_f) << "\n";
    const auto cov = coverage(sets, tru_f);
    metrics << "coverage_95," << cov.coverage << "\n";
    metrics << "near_miss," << cov.near_miss << "\n";
  }
  write_text(fs::path(out_dir) / "metrics.csv", metrics.str());

  std::ostringstream plr;
  plr << "# " << header << "\nband,kind,a0,a1,a2,sigma,n_used\n";
  for (int b = 0; b < B; ++b) {
    std::vector<double> periods, mags;
    for (const auto& e : estimates) {
      periods.push_back(e.p_hat);
      mags.push_back(e.m_hat(b));
    }
    const PLRFit q = fit_quadratic_plr(periods, mags);
    plr << b << ",quadratic," << q.a0 << ',' << q.a1 << ',' << q.a2 << ',' << q.sigma << ',' << q.n_used << "\n";
    try {
      const PLRFit l = fit_linear_plr(periods, mags);
      plr << b << ",linear," << l.a0 << ',' << l.a1 << ",0," << l.sigma << ',' << l.n_used << "\n";
    } catch (const validation_error&) {
      // no stars under the period cut; linear row omitted
    }
  }
  write_text(fs::path(out_dir) / "plr.csv", plr.str());

  const json rep = config.value("report", json::object());
  if (rep.contains("ledger")) {
    auto q = [&](const char* key, double def_v = 0.0, double def_e = 0.0) {
      if (!rep["ledger"].contains(key)) return Quantity{def_v, def_e};
      const auto& v = rep["ledger"][key];
      return Quantity{v[0].get<double>(), v[1].get<double>()};
    };
    const DistanceLedger led = distance_modulus(q("delta_a0"), q("delta_mbar"), q("delta_Alambda"),
                                                q("delta_ct"), q("mu_anchor", 18.493, 0.048));
    std::ostringstream ls;
    ls << "# " << header << "\nterm,value,err\n";
    ls << "delta_a0," << led.delta_a0.value << ',' << led.delta_a0.err << "\n";
    ls << "delta_mbar," << led.delta_mbar.value << ',' << led.delta_mbar.err << "\n";
    ls << "delta_Alambda," << led.delta_Alambda.value << ',' << led.delta_Alambda.err << "\n";
    ls << "delta_ct," << led.delta_ct.value << ',' << led.delta_ct.err << "\n";
    ls << "delta_mu," << led.delta_mu.value << ',' << led.delta_mu.err << "\n";
    ls << "mu_anchor," << led.mu_anchor.value << ',' << led.mu_anchor.err << "\n";
    ls << "mu_target," << led.mu_target.value << ',' << led.mu_target.err << "\n";
    write_text(fs::path(out_dir) / "ledger.csv", ls.str());
  }
  std::cerr << "report: wrote outputs to " << out_dir << "\n";
  return 0;
}

int cmd_downsample_eval(const json& config, const std::string& dataset_path,
                        const std::string& out_dir) {
  const Dataset ds = load_dataset(dataset_path, dataset_format(dataset_path), band_manifest(config));
  const int B = ds.band_count;
  const HyperParams hp = hyper_from_config(config, B);
  const auto kernels = kernels_from_config(config, B);
  const FitConfig fc = fit_from_config(config);
  const json d = config.value("downsample", json::object());

  DownsampleSetting setting;
  setting.star_budget = d.value("star_budget", 50);
  setting.replications = d.value("replications", 5);
  if (d.contains("caps"))
    for (const auto& c : d["caps"]) setting.caps.push_back(c.get<int>());
  else
    setting.caps.assign(B, 10);

  std::vector<double> a1(B, 0.0), a2(B, 0.0);
  if (d.contains("slopes")) {
    for (int b = 0; b < B; ++b) {
      a1[b] = d["slopes"][b][0].get<double>();
      a2[b] = d["slopes"][b][1].get<double>();
    }
  } else if (config.contains("hyper") && config["hyper"].contains("alpha_bar")) {
    for (int b = 0; b < B; ++b) {
      const Eigen::Vector3d alpha(config["hyper"]["alpha_bar"][b][0].get<double>(),
                                  config["hyper"]["alpha_bar"][b][1].get<double>(),
                                  config["hyper"]["alpha_bar"][b][2].get<double>());
      const Eigen::Vector3d a = alpha_to_a(alpha);
      a1[b] = a(1);
      a2[b] = a(2);
    }
  }

  const auto rows = run_downsample_eval(ds, hp, kernels, fc, setting, a1, a2,
                                        d.value("seed", std::uint64_t{0}));
  fs::create_directories(out_dir);
  std::ostringstream out;
  out << "# " << header_for(config) << "\nmethod,replication,band,intercept_shift,sigma_ratio\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.replication << ',' << r.band << ',' << r.intercept_shift << ','
        << r.sigma_ratio << "\n";
  out << "# median_abs_shift MGLS=" << median_abs_shift(rows, "MGLS")
      << " SVI=" << median_abs_shift(rows, "SVI") << "\n";
  write_text(fs::path(out_dir) / "downsample_eval.csv", out.str());
  std::cerr << "downsample-eval: wrote " << rows.size() << " rows to " << out_dir << "\n";
  return 0;
}

int cmd_periodogram(const json& config, const std::string& dataset_path, const std::string& star_id,
                    const std::string& out_dir) {
  const Dataset ds = load_dataset(dataset_path, dataset_format(dataset_path), band_manifest(config));
  const FitConfig fc = fit_from_config(config);
  const std::string header = header_for(config);
  fs::create_directories(out_dir);
  int written = 0;
  for (const auto& star : ds.stars) {
    if (!star_id.empty() && star.star_id != star_id) continue;
    const Periodogram pg = mgls(star, fc.grid);
    save_periodogram(pg, (fs::path(out_dir) / ("periodogram_" + star.star_id + ".csv")).string(), header);
    ++written;
  }
  if (written == 0) throw validation_error("periodogram: no matching star" +
                                           (star_id.empty() ? "" : ": " + star_id));
  std::cerr << "periodogram: wrote " << written << " files to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical multi-band period estimation and PLR fitting"};
  app.require_subcommand(1);

  std::string config_path, dataset_path, out_dir = "out", resume_path, truths_path,
              estimates_path, star_id;
  int threads = 0, iterations = -1;
  std::int64_t seed = -1;
  bool no_densities = false;

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--output-dir", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads (overrides config)");
  app.add_option("--seed", seed, "seed (overrides config)");

  auto* sim = app.add_subcommand("simulate", "generate synthetic datasets");
  auto* init = app.add_subcommand("init", "estimate hyperparameters from a data subset");
  auto* fit = app.add_subcommand("fit", "run the SVI fitter");
  auto* report = app.add_subcommand("report", "metrics, PLR fits, distance ledger");
  auto* deval = app.add_subcommand("downsample-eval", "subsampling stability comparison");
  auto* pgram = app.add_subcommand("periodogram", "MGLS periodogram dumps");

  for (auto* sc : {init, fit, deval, pgram})
    sc->add_option("--dataset", dataset_path, "light-curve file (.csv or .json)")->required();
  fit->add_option("--resume", resume_path, "checkpoint to resume from");
  fit->add_option("--iterations", iterations, "iteration count (overrides config)");
  fit->add_flag("--no-densities", no_densities, "skip per-star density dumps");
  report->add_option("--estimates", estimates_path, "estimates CSV from fit")->required();
  report->add_option("--truths", truths_path, "truths CSV for RR/ADE/coverage");
  pgram->add_option("--star", star_id, "restrict to one star id");

  CLI11_PARSE(app, argc, argv);

  try {
    json config = load_config(config_path);
    if (seed >= 0) {
      config["fit"]["seed"] = static_cast<std::uint64_t>(seed);
      config["simulate"]["seed"] = static_cast<std::uint64_t>(seed);
      config["init"]["seed"] = static_cast<std::uint64_t>(seed);
      config["downsample"]["seed"] = static_cast<std::uint64_t>(seed);
    }
    if (threads > 0) config["fit"]["threads"] = threads;
    if (iterations >= 0) config["fit"]["iterations"] = iterations;

    if (sim->parsed()) return cmd_simulate(config, out_dir);
    if (init->parsed()) return cmd_init(config, dataset_path, out_dir);
    if (fit->parsed()) return cmd_fit(config, dataset_path, out_dir, resume_path, !no_densities);
    if (report->parsed()) return cmd_report(config, estimates_path, truths_path, out_dir);
    if (deval->parsed()) return cmd_downsample_eval(config, dataset_path, out_dir);
    if (pgram->parsed()) return cmd_periodogram(config, dataset_path, star_id, out_dir);
  } catch (const validation_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
