#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "oujm/ic.hpp"
#include "oujm/ingest.hpp"
#include "oujm/mcmc.hpp"
#include "oujm/ppc.hpp"
#include "oujm/simulate.hpp"

namespace {

using namespace oujm;

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw DataInconsistencyError("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

// JSON config supplies values only for options not given on the command line
template <typename T>
void merge(const CLI::Option* opt, const nlohmann::json& cfg, const char* key, T& out) {
  if (opt != nullptr && opt->count() > 0) return;
  if (cfg.contains(key)) out = cfg.at(key).get<T>();
}

Mechanism parse_mechanism(const std::string& s) {
  if (s == "additive") return Mechanism::additive;
  if (s == "drift") return Mechanism::drift;
  throw InvalidInputError("mechanism must be additive or drift");
}

LoadingsSpec default_pattern(int k, int p) {
  // first half of the items on factor 1, the rest on factor 2
  LoadingsSpec sp;
  sp.k = k;
  sp.p = p;
  for (int i = 0; i < k; ++i) sp.cells.emplace_back(i, i < (k + 1) / 2 ? 0 : std::min(1, p - 1));
  return sp;
}

int cmd_simulate(const nlohmann::json& cfg, const std::string& out, std::uint64_t seed,
                 int threads, int setting, const std::string& mechanism,
                 const std::string& hazard, int n_subjects) {
  SimConfig sim;
  sim.setting = setting;
  sim.tx_mechanism = parse_mechanism(mechanism);
  if (hazard == "model1")
    sim.hazard_form = HazardForm::model1;
  else if (hazard == "model2")
    sim.hazard_form = HazardForm::model2;
  else
    throw InvalidInputError("hazard must be model1 or model2");
  sim.n_subjects = n_subjects;
  sim.seed = seed;
  sim.threads = threads;
  if (cfg.contains("follow_up_days")) sim.follow_up_days = cfg.at("follow_up_days");
  if (cfg.contains("obs_per_day")) sim.obs_per_day = cfg.at("obs_per_day");
  if (cfg.contains("trt_per_day")) sim.trt_per_day = cfg.at("trt_per_day");
  if (cfg.contains("fine_grid_width")) sim.fine_grid_width = cfg.at("fine_grid_width");
  if (sim.setting != 1 && sim.setting != 2)
    throw InvalidInputError("setting must be 1 or 2");
  if (sim.n_subjects < 1) throw InvalidInputError("n_subjects must be positive");
  Dataset data = simulate_dataset(sim);
  write_bundle(data, out);
  return 0;
}

ModelConfig model_from_config(const nlohmann::json& cfg, const Dataset& data) {
  ModelConfig mc;
  mc.mechanism = parse_mechanism(cfg.value("mechanism", "additive"));
  std::string base = cfg.value("baseline", "constant");
  if (base == "constant")
    mc.baseline = BaselineKind::constant;
  else if (base == "lognormal_prepost")
    mc.baseline = BaselineKind::lognormal_prepost;
  else
    throw InvalidInputError("baseline must be constant or lognormal_prepost");
  mc.use_beta3 = cfg.value("use_beta3", false);
  std::string g = cfg.value("g_variant", "k4");
  if (g == "k4")
    mc.g_variant = GVariant::k4;
  else if (g == "k1_5")
    mc.g_variant = GVariant::k1_5;
  else
    throw InvalidInputError("g_variant must be k4 or k1_5");
  mc.split_tau_tilde = cfg.value("split_tau_tilde", false);
  if (cfg.contains("quit_time"))
    mc.quit_time = cfg.at("quit_time").get<double>();
  else if (data.quit_time)
    mc.quit_time = data.quit_time;
  mc.longitudinal_only = cfg.value("longitudinal_only", false);
  mc.grid_width = cfg.value("grid_width", 0.5);
  if (cfg.contains("pattern")) {
    mc.pattern.k = data.k;
    mc.pattern.p = data.p;
    for (const auto& c : cfg.at("pattern").at("cells"))
      mc.pattern.cells.emplace_back(c[0].get<int>(), c[1].get<int>());
  } else {
    mc.pattern = default_pattern(data.k, data.p);
  }
  return mc;
}

int cmd_fit(const nlohmann::json& cfg, const std::string& data_dir,
            const std::string& out, std::uint64_t seed, int threads, int chains,
            int iterations, int burn_in, double rescale) {
  Dataset data = read_bundle(data_dir);
  if (rescale != 1.0) data = data.rescaled(rescale);
  ModelConfig mc = model_from_config(cfg, data);
  SamplerConfig sc;
  sc.iterations = iterations;
  sc.burn_in = burn_in;
  sc.chains = chains;
  sc.seed = seed;
  sc.threads = threads;
  sc.latent_thin = cfg.value("latent_thin", 1);
  PosteriorArchive arch = run_mcmc(data, mc, sc);
  write_archive(arch, out);
  nlohmann::json info;
  info["data"] = data_dir;
  info["time_rescale"] = rescale;
  std::ofstream(out + "/fit_info.json") << info.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint latent-process / recurrent-event modeling pipeline"};
  app.require_subcommand(1);

  std::string config_path, out, data_dir, archive_dir, ema_path, trt_path;
  std::uint64_t seed = 1;
  int threads = 1;

  auto add_common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "master RNG seed");
    sub->add_option("--threads", threads, "worker threads");
    if (with_out) sub->add_option("--out", out, "output path")->required();
  };

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset bundle");
  int setting = 1, n_subjects = 100;
  std::string mechanism = "additive", hazard = "model1";
  add_common(sim);
  auto* o_setting = sim->add_option("--setting", setting, "parameter setting (1|2)");
  auto* o_mech = sim->add_option("--mechanism", mechanism, "additive|drift");
  auto* o_haz = sim->add_option("--hazard", hazard, "model1|model2");
  auto* o_n = sim->add_option("--n", n_subjects, "number of subjects");

  // fit
  auto* fit = app.add_subcommand("fit", "run MCMC on a dataset bundle");
  int chains = 1, iterations = 2000, burn_in = 1000;
  double rescale = 1.0;
  add_common(fit);
  fit->add_option("--data", data_dir, "dataset bundle directory")->required();
  auto* o_chains = fit->add_option("--chains", chains);
  auto* o_iters = fit->add_option("--iterations", iterations);
  auto* o_burn = fit->add_option("--burn-in", burn_in);
  auto* o_rescale = fit->add_option("--rescale-time", rescale,
                                    "divide all times by this factor before fitting");

  // ic
  auto* ic = app.add_subcommand("ic", "DIC/WAIC report from a posterior archive");
  int m_draws = 25, ic_samples = 800;
  add_common(ic);
  ic->add_option("--archive", archive_dir, "posterior archive directory")->required();
  ic->add_option("--data", data_dir, "dataset bundle directory")->required();
  auto* o_m = ic->add_option("--m", m_draws,
                             "latent draws per subject for the event term");
  auto* o_s = ic->add_option("--samples", ic_samples, "posterior samples used");

  // ppc
  auto* ppc = app.add_subcommand("ppc", "posterior predictive MCF summaries");
  std::vector<double> windows{0.0, 2.0, 5.0, 7.0};
  int ppc_samples = 200;
  add_common(ppc);
  ppc->add_option("--archive", archive_dir, "posterior archive directory")->required();
  ppc->add_option("--data", data_dir, "dataset bundle directory")->required();
  auto* o_windows = ppc->add_option("--windows", windows, "window start days");
  auto* o_ppcs = ppc->add_option("--samples", ppc_samples, "posterior draws used");

  // ingest
  auto* ing = app.add_subcommand("ingest", "convert raw EMA exports to a bundle");
  add_common(ing);
  ing->add_option("--ema", ema_path, "EMA export CSV")->required();
  ing->add_option("--treatments", trt_path, "treatment timestamps CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    nlohmann::json cfg = load_config(config_path);
    if (sim->parsed()) {
      merge(o_setting, cfg, "setting", setting);
      merge(o_mech, cfg, "mechanism", mechanism);
      merge(o_haz, cfg, "hazard", hazard);
      merge(o_n, cfg, "n_subjects", n_subjects);
      return cmd_simulate(cfg, out, seed, threads, setting, mechanism, hazard,
                          n_subjects);
    }
    if (fit->parsed()) {
      merge(o_chains, cfg, "chains", chains);
      merge(o_iters, cfg, "iterations", iterations);
      merge(o_burn, cfg, "burn_in", burn_in);
      merge(o_rescale, cfg, "time_rescale", rescale);
      return cmd_fit(cfg, data_dir, out, seed, threads, chains, iterations, burn_in,
                     rescale);
    }
    if (ic->parsed()) {
      merge(o_m, cfg, "m_draws", m_draws);
      merge(o_s, cfg, "max_samples", ic_samples);
      PosteriorArchive arch = read_archive(archive_dir);
      Dataset data = read_bundle(data_dir);
      IcConfig icc;
      icc.m_draws = m_draws;
      icc.max_samples = ic_samples;
      icc.seed = seed;
      icc.threads = threads;
      IcReport rep = compute_ic(arch, data, icc);
      write_ic_report(rep, arch.config, out);
      return 0;
    }
    if (ppc->parsed()) {
      merge(o_windows, cfg, "windows", windows);
      merge(o_ppcs, cfg, "max_samples", ppc_samples);
      PosteriorArchive arch = read_archive(archive_dir);
      Dataset data = read_bundle(data_dir);
      PpcConfig pc;
      pc.window_starts = windows;
      pc.max_samples = ppc_samples;
      pc.seed = seed;
      pc.threads = threads;
      write_ppc_summary(run_ppc(arch, data, pc), out);
      return 0;
    }
    if (ing->parsed()) {
      write_ingest_output(build_dataset(ema_path, trt_path), out);
      return 0;
    }
  } catch (const InvalidInputError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const OrderingError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataInconsistencyError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
