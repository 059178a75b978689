// densdep command-line front end: simulate population series, fit the
// evolving model posterior, and compare prior families by predictive
// accuracy. All randomness flows from --seed through documented stream
// derivation; identical invocations produce byte-identical outputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "densdep/dynamics.hpp"
#include "densdep/inference.hpp"
#include "densdep/ingest.hpp"
#include "densdep/metrics.hpp"
#include "densdep/priors.hpp"
#include "densdep/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, densdep::PriorFamily> kFamilyByName = {
    {"indep5", densdep::PriorFamily::Independent5},
    {"indep1", densdep::PriorFamily::Independent1},
    {"corr", densdep::PriorFamily::Correlated},
    {"shrink1", densdep::PriorFamily::Shrinkage1},
    {"shrink2", densdep::PriorFamily::Shrinkage2},
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct RunConfig {
  std::string subcommand;
  std::string input;
  std::string prior = "shrink1";
  std::vector<std::string> priors;  // compare-priors
  double sigma_b2 = 1.0;
  double h = 0.04225;
  int particles = 5000;
  std::uint64_t seed = 1;
  int n_seeds = 1;
  std::string center_window;  // "START:END", empty = full series
  std::string dm_cov = "diag";
  std::string out_dir = ".";
  bool svg = false;
  bool serial = false;
  // simulate-only
  std::string preset;
  int k = 1;
  std::vector<double> b;
  double sigma = 0.05;
  double obs_sd = 0.05;
  int horizon = 501;

  json to_json() const {
    json j;
    j["subcommand"] = subcommand;
    j["input"] = input;
    j["prior"] = prior;
    j["priors"] = priors;
    j["sigma_b2"] = sigma_b2;
    j["h"] = h;
    j["particles"] = particles;
    j["seed"] = seed;
    j["n_seeds"] = n_seeds;
    j["center_window"] = center_window;
    j["dm_cov"] = dm_cov;
    j["out"] = out_dir;
    j["svg"] = svg;
    j["serial"] = serial;
    if (subcommand == "simulate") {
      j["preset"] = preset;
      j["k"] = k;
      j["b"] = b;
      j["sigma"] = sigma;
      j["obs_sd"] = obs_sd;
      j["horizon"] = horizon;
    }
    return j;
  }
};

// Provenance header embedded in every output file.
std::string provenance(const RunConfig& cfg) {
  std::ostringstream os;
  os << "# densdep " << densdep::kVersion << "\n";
  os << "# config: " << cfg.to_json().dump() << "\n";
  return os.str();
}

void write_manifest(const RunConfig& cfg, const fs::path& dir) {
  json j;
  j["tool"] = "densdep";
  j["version"] = densdep::kVersion;
  j["config"] = cfg.to_json();
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << "\n";
}

std::pair<int, int> parse_window(const std::string& spec, int n) {
  if (spec.empty()) return {0, n};
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw densdep::InvalidArgument("--center-window must be START:END");
  }
  return {std::stoi(spec.substr(0, colon)), std::stoi(spec.substr(colon + 1))};
}

// Accepts either raw survey counts (year,count,se) or the log-scale format
// written by the simulate subcommand (t,x_latent,y_observed,obs_sd).
densdep::ObservedSeries load_input(const RunConfig& cfg) {
  std::ifstream in(cfg.input);
  if (!in) {
    throw densdep::DataError("cannot open " + cfg.input);
  }
  std::string header;
  do {
    if (!std::getline(in, header)) {
      throw densdep::DataError(cfg.input + ": empty file");
    }
  } while (!header.empty() && header[0] == '#');

  if (header.rfind("year,count,se", 0) == 0) {
    const auto raw = densdep::load_series(cfg.input);
    const auto logs = densdep::to_log_scale(raw);
    auto window =
        parse_window(cfg.center_window, static_cast<int>(logs.log_count.size()));
    return densdep::center(logs.log_count, logs.log_sd, window);
  }
  if (header.rfind("t,x_latent,y_observed,obs_sd", 0) == 0 ||
      header.rfind("t,y_observed,obs_sd", 0) == 0) {
    densdep::ObservedSeries obs;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::stringstream ss(line);
      std::string field;
      std::vector<double> vals;
      while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
      obs.y.push_back(vals[vals.size() - 2]);
      obs.S.push_back(vals[vals.size() - 1]);
    }
    obs.center_window = {0, static_cast<int>(obs.y.size())};
    return obs;
  }
  throw densdep::DataError(cfg.input +
                           ": unrecognized header (expected year,count,se or "
                           "t,x_latent,y_observed,obs_sd)");
}

densdep::FilterConfig filter_config(const RunConfig& cfg) {
  densdep::FilterConfig fc;
  fc.n_particles = cfg.particles;
  fc.parallel = !cfg.serial;
  return fc;
}

// Minimal SVG line chart; purely presentational, tests assert on CSVs.
void write_svg(const fs::path& path, const std::string& title,
               const std::vector<double>& xs,
               const std::vector<std::pair<std::string, std::vector<double>>>&
                   series,
               const std::string& preamble) {
  const int w = 720, hpx = 420, m = 50;
  double ymin = 1e300, ymax = -1e300;
  for (const auto& [_, ys] : series) {
    for (double v : ys) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  const double xmin = xs.front(), xmax = xs.back();
  auto px = [&](double x) {
    return m + (x - xmin) / (xmax - xmin) * (w - 2 * m);
  };
  auto py = [&](double y) {
    return hpx - m - (y - ymin) / (ymax - ymin) * (hpx - 2 * m);
  };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                 "#d62728", "#9467bd", "#8c564b"};
  std::ofstream out(path);
  out << "<?xml version=\"1.0\"?>\n";
  out << "<!--\n" << preamble << "-->\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << hpx << "\">\n";
  out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">"
      << title << "</text>\n";
  int ci = 0;
  for (const auto& [name, ys] : series) {
    out << "<polyline fill=\"none\" stroke=\"" << colors[ci % 6]
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
      out << fmt(px(xs[i])) << "," << fmt(py(ys[i])) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << w - m + 4 << "\" y=\"" << m + 16 * ci
        << "\" fill=\"" << colors[ci % 6] << "\" font-size=\"11\">" << name
        << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
}

int cmd_simulate(RunConfig cfg) {
  densdep::DynamicsParams params;
  double obs_sd = cfg.obs_sd;
  if (cfg.preset == "sim1") {
    params = {1, {0.5, -0.5}, 0.05 * 0.05};
    obs_sd = 0.05;
    cfg.horizon = 501;
    cfg.k = 1;
    cfg.b = {0.5, -0.5};
    cfg.sigma = 0.05;
    cfg.obs_sd = 0.05;
  } else if (cfg.preset == "sim2") {
    params = {2, {0.5, -0.1, -0.4}, 0.05 * 0.05};
    obs_sd = 0.05;
    cfg.horizon = 501;
    cfg.k = 2;
    cfg.b = {0.5, -0.1, -0.4};
    cfg.sigma = 0.05;
    cfg.obs_sd = 0.05;
  } else if (!cfg.preset.empty()) {
    throw densdep::InvalidArgument("unknown preset " + cfg.preset);
  } else {
    if (cfg.b.empty()) {
      throw densdep::InvalidArgument("simulate needs --preset or --k/--b");
    }
    params = {cfg.k, cfg.b, cfg.sigma * cfg.sigma};
  }

  const std::vector<double> init(
      static_cast<std::size_t>(std::max(params.k, 1)), 0.0);
  const std::vector<double> sds(static_cast<std::size_t>(cfg.horizon), obs_sd);
  const auto traj =
      densdep::simulate(params, init, cfg.horizon, sds, cfg.seed);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  std::ofstream out(dir / "trajectory.csv");
  out << provenance(cfg);
  out << "t,x_latent,y_observed,obs_sd\n";
  for (std::size_t t = 0; t < traj.latent.size(); ++t) {
    out << (t + 1) << "," << fmt(traj.latent[t]) << ","
        << fmt(traj.observed[t]) << "," << fmt(traj.obs_sd[t]) << "\n";
  }
  write_manifest(cfg, dir);
  std::cout << "wrote " << (dir / "trajectory.csv").string() << " ("
            << traj.latent.size() << " rows)\n";
  return 0;
}

int cmd_fit(RunConfig cfg) {
  const auto obs = load_input(cfg);
  const densdep::HyperParams hyper{cfg.sigma_b2, cfg.h};
  const auto family = kFamilyByName.at(cfg.prior);
  const bool full_cov = cfg.dm_cov == "full";
  const auto trace = densdep::run_filter(obs, family, hyper,
                                         filter_config(cfg), cfg.seed, full_cov);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  {
    std::ofstream out(dir / "posterior_trace.csv");
    out << provenance(cfg);
    out << "t,p_k0,p_k1,p_k2,p_k3,p_k4,p_k5\n";
    for (std::size_t r = 0; r < trace.posterior.size(); ++r) {
      out << (densdep::kWarmupYears + r);
      for (double p : trace.posterior[r]) out << "," << fmt(p);
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "final_posterior.csv");
    out << provenance(cfg);
    out << "p_k0,p_k1,p_k2,p_k3,p_k4,p_k5\n";
    const auto& row = trace.posterior.back();
    for (std::size_t k = 0; k < row.size(); ++k) {
      out << (k ? "," : "") << fmt(row[k]);
    }
    out << "\n";
  }
  {
    std::ofstream out(dir / "smoothed.csv");
    out << provenance(cfg);
    out << "t,x_smoothed\n";
    for (std::size_t t = 0; t < trace.smoothed.size(); ++t) {
      out << (t + 1) << "," << fmt(trace.smoothed[t]) << "\n";
    }
  }
  {
    const auto records = densdep::make_prediction_records(trace);
    std::ofstream out(dir / "predictions.csv");
    out << provenance(cfg);
    out << "t,xhat,pvar,xtilde,sq_error\n";
    for (const auto& r : records) {
      const double e = r.xhat - r.xtilde;
      out << r.t << "," << fmt(r.xhat) << "," << fmt(r.pvar) << ","
          << fmt(r.xtilde) << "," << fmt(e * e) << "\n";
    }
  }
  if (cfg.svg) {
    std::vector<double> ts;
    std::vector<std::pair<std::string, std::vector<double>>> series(6);
    for (int k = 0; k < 6; ++k) series[k].first = "k=" + std::to_string(k);
    for (std::size_t r = 0; r < trace.posterior.size(); ++r) {
      ts.push_back(static_cast<double>(densdep::kWarmupYears + r));
      for (int k = 0; k < 6; ++k) {
        series[k].second.push_back(trace.posterior[r][k]);
      }
    }
    write_svg(dir / "posterior.svg", "Evolving model posterior", ts, series,
              provenance(cfg));
  }
  write_manifest(cfg, dir);
  std::cout << "final posterior:";
  for (double p : trace.posterior.back()) std::cout << " " << fmt(p);
  std::cout << "\n";
  return 0;
}

int cmd_compare(RunConfig cfg) {
  const auto obs = load_input(cfg);
  const densdep::HyperParams hyper{cfg.sigma_b2, cfg.h};
  std::vector<densdep::PriorFamily> families;
  for (const auto& name : cfg.priors) families.push_back(kFamilyByName.at(name));
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.n_seeds; ++i) seeds.push_back(cfg.seed + i);
  const auto mode = cfg.dm_cov == "full" ? densdep::DmCovMode::Full
                                         : densdep::DmCovMode::Diagonal;

  const auto table = densdep::compare_priors(obs, families, hyper,
                                             filter_config(cfg), seeds, mode);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "comparison.csv");
    out << provenance(cfg);
    out << "# dm_cov=" << cfg.dm_cov
        << (cfg.dm_cov == "diag"
                ? " (diagonal predictive-variance approximation)"
                : " (lineage-estimated full covariance)")
        << "\n";
    out << "prior,median_dm";
    for (int k = 0; k < 6; ++k) out << ",p_k" << k;
    out << "\n";
    for (const auto& row : table.rows) {
      out << densdep::family_name(row.family) << "," << fmt(row.median_dm);
      for (double p : row.mean_final_posterior) out << "," << fmt(p);
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "mse_normalized.csv");
    out << provenance(cfg);
    out << "t";
    for (const auto& row : table.rows) {
      out << "," << densdep::family_name(row.family) << "_pct";
    }
    out << "\n";
    for (std::size_t i = 0; i < table.years.size(); ++i) {
      out << table.years[i];
      for (const auto& row : table.rows) out << "," << fmt(row.mse_percent[i]);
      out << "\n";
    }
  }
  if (cfg.svg) {
    std::vector<double> ts(table.years.begin(), table.years.end());
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (const auto& row : table.rows) {
      series.emplace_back(densdep::family_name(row.family), row.mse_percent);
    }
    write_svg(dir / "mse.svg", "One-step MSE, % of baseline", ts, series,
              provenance(cfg));
  }
  write_manifest(cfg, dir);
  for (const auto& row : table.rows) {
    std::cout << densdep::family_name(row.family)
              << " median D_M = " << fmt(row.median_dm) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian density-dependence inference for population series"};
  app.require_subcommand(1);
  RunConfig cfg;

  app.set_help_flag("--help", "print help and exit");

  auto add_shared = [&](CLI::App* sub) {
    // free the short -h so --h can name the hyperparameter
    sub->set_help_flag("--help", "print help and exit");
    sub->add_option("--seed", cfg.seed, "master RNG seed");
    sub->add_option("--particles", cfg.particles, "particles per model bank");
    sub->add_option("--sigma-b2", cfg.sigma_b2, "total feedback prior variance");
    sub->add_option("--h", cfg.h, "extra b0 prior variance");
    sub->add_option("--center-window", cfg.center_window,
                    "centering window START:END (default full series)");
    sub->add_option("--dm-cov", cfg.dm_cov, "Mahalanobis covariance: diag|full")
        ->check(CLI::IsMember({"diag", "full"}));
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_flag("--svg", cfg.svg, "also write SVG plots");
    sub->add_flag("--serial", cfg.serial, "disable bank-level parallelism");
  };

  auto* sim = app.add_subcommand("simulate", "simulate a population series");
  add_shared(sim);
  sim->add_option("--preset", cfg.preset, "sim1 (k=1) or sim2 (k=2)");
  sim->add_option("--k", cfg.k, "model order");
  sim->add_option("--b", cfg.b, "coefficients b0..bk")->delimiter(',');
  sim->add_option("--sigma", cfg.sigma, "innovation SD");
  sim->add_option("--obs-sd", cfg.obs_sd, "observation SD");
  sim->add_option("--horizon", cfg.horizon, "years to simulate");

  auto* fit = app.add_subcommand("fit", "fit the evolving model posterior");
  add_shared(fit);
  fit->add_option("input", cfg.input, "input CSV")->required();
  fit->add_option("--prior", cfg.prior, "prior family")
      ->check(CLI::IsMember({"indep5", "indep1", "corr", "shrink1", "shrink2"}));

  auto* cmp = app.add_subcommand("compare-priors",
                                 "compare prior families by accuracy");
  add_shared(cmp);
  cmp->add_option("input", cfg.input, "input CSV")->required();
  cmp->add_option("--priors", cfg.priors, "families to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"indep5", "indep1", "corr", "shrink1", "shrink2"}));
  cmp->add_option("--n-seeds", cfg.n_seeds, "number of replicate seeds");

  CLI11_PARSE(app, argc, argv);

  if (cfg.priors.empty()) {
    cfg.priors = {"indep5", "indep1", "corr", "shrink1", "shrink2"};
  }

  try {
    if (sim->parsed()) {
      cfg.subcommand = "simulate";
      return cmd_simulate(cfg);
    }
    if (fit->parsed()) {
      cfg.subcommand = "fit";
      return cmd_fit(cfg);
    }
    if (cmp->parsed()) {
      cfg.subcommand = "compare-priors";
      if (cfg.priors.size() < 2) {
        throw densdep::InvalidArgument("compare-priors needs >= 2 families");
      }
      return cmd_compare(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
