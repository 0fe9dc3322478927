#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "sidx/sidx.hpp"

namespace sidx::cli {
namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_summary(const ExperimentReport& rep, std::ostream& out) {
  const auto names = rep.column_names();
  const Vector m = rep.means();
  const Vector s = rep.sds();
  out << "n=" << rep.config.n << " d=" << rep.config.d << " replications=" << rep.rows.size()
      << " succeeded=" << rep.succeeded() << " cv_mode=" << to_string(rep.cv_mode) << '\n';
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << "  " << names[j] << "  mean " << fmt6(m[j]);
    if (!std::isnan(s[j])) out << "  sd " << fmt6(s[j]);
    out << '\n';
  }
  for (const auto& r : rep.rows) {
    if (!r.ok()) out << "  replication " << r.replication << " failed: " << r.error << '\n';
  }
}

// Options shared by simulate and bench.
struct SimOptions {
  std::string preset = "table1";
  std::string config;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string cv_mode;
  unsigned threads = 0;
  std::size_t test_points = 0;
  std::string out;
  bool force = false;
};

void add_sim_options(CLI::App* sub, SimOptions& o) {
  sub->add_option("--preset", o.preset, "table1 (d=2), table2 (d=3) or table3 (d=4)")
      ->check(CLI::IsMember({"table1", "table2", "table3"}));
  sub->add_option("--config", o.config, "key = value experiment config, applied after the preset");
  sub->add_option("--reps", o.reps, "replications");
  sub->add_option("--seed", o.seed, "root seed")->each([&o](const std::string&) { o.seed_set = true; });
  sub->add_option("--cv-mode", o.cv_mode, "exact, weights-only or auto")
      ->check(CLI::IsMember({"exact", "weights-only", "auto"}));
  sub->add_option("--threads", o.threads, "worker threads for replications");
  sub->add_option("--test-points", o.test_points, "Monte Carlo draws per MISE");
  sub->add_option("--out", o.out, "output directory");
  sub->add_flag("--force", o.force, "overwrite existing report files");
}

ExperimentConfig sim_config(const SimOptions& o) {
  ExperimentConfig cfg = preset_config(o.preset);
  if (!o.config.empty()) {
    cfg = read_config_file(o.config, cfg);
  }
  if (o.n) cfg.n = o.n;
  if (o.reps) cfg.replications = o.reps;
  if (o.seed_set) cfg.seed = o.seed;
  if (o.cv_mode == "exact") cfg.temperatures.cv_mode = CvMode::exact_loo;
  if (o.cv_mode == "weights-only") cfg.temperatures.cv_mode = CvMode::weights_only_loo;
  if (o.cv_mode == "auto") cfg.temperatures.cv_mode.reset();
  if (o.threads) cfg.threads = o.threads;
  if (o.test_points) cfg.test_points = o.test_points;
  cfg.validate();
  return cfg;
}

int cmd_simulate(const SimOptions& o, std::ostream& out) {
  const ExperimentConfig cfg = sim_config(o);
  const ExperimentReport rep = run_experiment(cfg);
  print_summary(rep, out);
  if (!o.out.empty()) emit_report(rep, o.out, o.force);
  return rep.succeeded() == rep.rows.size() ? 0 : 3;
}

int cmd_bench(SimOptions o, std::ostream& out) {
  if (!o.reps) o.reps = 10;
  int status = 0;
  out << "statistic n";
  ExperimentConfig probe = sim_config(o);
  ExperimentReport header;
  header.config = probe;
  for (const auto& c : header.column_names()) out << ' ' << c;
  out << " meanT seconds\n";
  for (std::size_t n : {100, 200, 400}) {
    o.n = n;
    const ExperimentConfig cfg = sim_config(o);
    const ExperimentReport rep = run_experiment(cfg);
    out << "mean " << n;
    for (double v : rep.means()) out << ' ' << fmt6(v);
    out << ' ' << fmt6(rep.mean_cv_temperature()) << ' ' << fmt6(rep.wall_seconds) << '\n';
    out << "sd " << n;
    for (double v : rep.sds()) out << ' ' << fmt6(v);
    out << '\n';
    if (!o.out.empty()) emit_report(rep, std::filesystem::path(o.out) / ("n" + std::to_string(n)), o.force);
    if (rep.succeeded() != rep.rows.size()) status = 3;
  }
  return status;
}

struct LatticeOptions {
  std::size_t dim = 2;
  double step = 0.0;
  double n = 0.0;
  double s_min = 1.0;
  std::size_t grid_size = 16;
  std::string csv;
  bool explain = false;
};

int cmd_lattice(const LatticeOptions& o, std::ostream& out) {
  double step = o.step;
  if (!(step > 0.0)) {
    if (!(o.n > 1.0)) throw InvalidConfig("lattice: give --step or --n");
    step = lattice_step(o.n, o.s_min);
  }
  const SphereLattice lat = build_lattice(o.dim, step);
  out << "dim " << o.dim << " step " << format_real(step) << " points " << lat.size()
      << " parameters " << lat.size() * o.grid_size << '\n';
  if (o.explain) {
    out << "The outermost angle phi_" << o.dim - 1 << " ranges over [0, pi] in steps of acos(1 - step^2/2),\n"
        << "so consecutive points along it are exactly `step` apart in chord length.\n"
        << "Each inner angle phi_k uses step / max(|cos phi_{k+1} ... cos phi_{d-1}|, step/pi):\n"
        << "near a pole the parallel circles shrink by that cosine product, so the angular step is\n"
        << "widened to keep the spacing on the sphere close to `step`, capped at pi (one point).\n"
        << "Points closer than step/8 to an accepted point are dropped as duplicates.\n";
  }
  if (!o.csv.empty()) {
    std::ostringstream s;
    for (std::size_t k = 0; k < o.dim; ++k) s << (k ? "," : "") << 'v' << k + 1;
    s << '\n';
    for (std::size_t i = 0; i < lat.size(); ++i) s << format_vector(lat.point(i), ',') << '\n';
    write_file(o.csv, s.str(), true);
  }
  return 0;
}

struct FitOptions {
  std::string input;
  std::size_t dim = 0;
  double temperature = 0.0;
  bool cv = false;
  std::string config;
  std::uint64_t seed = 1;
  bool seed_set = false;
  double noise_bound = 0.0;
  std::string out;
  std::string meta;
  std::string curve;
  std::size_t curve_points = 201;
};

// Without an explicit bound, sigma_1 is estimated as sd(Y)/sqrt(1 + rsnr),
// which is exact in expectation for data calibrated like the simulations.
double default_noise_bound(const RegressionSample& s, double rsnr) {
  double mean = 0.0;
  for (double y : s.ys()) mean += y;
  mean /= static_cast<double>(s.size());
  double ss = 0.0;
  for (double y : s.ys()) ss += (y - mean) * (y - mean);
  const double sd = std::sqrt(ss / static_cast<double>(s.size() - 1));
  return sd > 0.0 ? sd / std::sqrt(1.0 + rsnr) : 1.0;
}

int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  const RegressionSample sample = read_csv_sample(o.input, o.dim);
  if (sample.size() < 8) throw InvalidConfig(o.input + ": need at least 8 rows");
  ExperimentConfig ecfg;
  ecfg.d = o.dim;
  ecfg.theta.assign(o.dim, 0.0);
  ecfg.theta.back() = 1.0;
  if (!o.config.empty()) ecfg = read_config_file(o.config, ecfg);
  if (o.seed_set) ecfg.seed = o.seed;
  double sigma1 = ecfg.noise_bound.value_or(default_noise_bound(sample, ecfg.rsnr));
  if (o.noise_bound > 0.0) sigma1 = o.noise_bound;
  PipelineConfig pc = ecfg.pipeline(sigma1, ecfg.seed);
  pc.noise_bound = sigma1;
  if (o.temperature > 0.0 && !o.cv) pc.temperature = o.temperature;
  const FitResult fit = fit_pipeline(sample, pc);
  const auto& dict = fit.dictionary;
  const auto& ens = fit.ensemble;

  std::ostringstream csv;
  csv << "member";
  for (std::size_t k = 0; k < o.dim; ++k) csv << ",v" << k + 1;
  csv << ",smoothness,radius,risk,weight\n";
  for (std::size_t m = 0; m < dict.size(); ++m) {
    const auto& c = dict.members[m].lpe().config();
    csv << m << ',' << format_vector(dict.directions[dict.member_direction[m]], ',') << ','
        << format_real(c.smoothness) << ',' << format_real(c.radius) << ','
        << format_real(dict.risks[m]) << ',' << format_real(ens.weights[m]) << '\n';
  }

  const std::size_t top = ens.top_member();
  const Vector& vhat = dict.directions[dict.member_direction[top]];
  nlohmann::ordered_json meta;
  meta["n"] = sample.size();
  meta["d"] = o.dim;
  meta["temperature"] = ens.temperature;
  meta["temperature_source"] = fit.cv ? "cv" : "fixed";
  if (fit.cv) meta["cv_mode"] = to_string(fit.cv->mode);
  meta["members"] = dict.size();
  meta["directions"] = dict.directions.size();
  meta["truncation"] = dict.truncation;
  meta["noise_bound"] = sigma1;
  meta["seed"] = ecfg.seed;
  meta["top_member"] = top;
  meta["top_direction"] = vhat;
  if (fit.preselection) meta["preselect_iterations"] = fit.preselection->iterations;
  const std::string meta_line = meta.dump() + "\n";

  if (o.out.empty() || o.out == "-") {
    out << csv.str();
  } else {
    write_file(o.out, csv.str(), true);
  }
  if (!o.meta.empty()) {
    write_file(o.meta, meta_line, true);
  } else if (!o.out.empty() && o.out != "-") {
    write_file(o.out + ".json", meta_line, true);
  } else {
    err << meta_line;
  }

  if (!o.curve.empty()) {
    std::ostringstream c;
    c << "z,fhat\n";
    Vector x(o.dim);
    const std::size_t np = std::max<std::size_t>(o.curve_points, 2);
    for (std::size_t p = 0; p < np; ++p) {
      const double z = -1.0 + 2.0 * static_cast<double>(p) / static_cast<double>(np - 1);
      for (std::size_t k = 0; k < o.dim; ++k) x[k] = z * vhat[k];
      c << format_real(z) << ',' << format_real(aggregate_predict(ens, x)) << '\n';
    }
    write_file(o.curve, c.str(), true);
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-index regression by aggregation of local polynomial estimators"};
  app.require_subcommand(1);

  LatticeOptions lo;
  auto* lat = app.add_subcommand("lattice", "build the direction lattice on the half-sphere");
  lat->add_option("--dim", lo.dim, "dimension d >= 2")->required();
  lat->add_option("--step", lo.step, "lattice step");
  lat->add_option("--n", lo.n, "derive the step from a sample size");
  lat->add_option("--s-min", lo.s_min, "smoothness used with --n");
  lat->add_option("--grid-size", lo.grid_size, "weak estimators per direction");
  lat->add_option("--csv", lo.csv, "write the points as CSV");
  lat->add_flag("--explain", lo.explain, "describe the angular step rule");

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "fit the aggregated estimator to a CSV sample");
  fit->add_option("--input", fo.input, "CSV with columns x1..xd,y")->required();
  fit->add_option("--dim", fo.dim, "dimension d")->required()->check(CLI::Range(2, 1 << 20));
  auto* temp = fit->add_option("--temperature", fo.temperature, "fixed Gibbs temperature")
                   ->check(CLI::PositiveNumber);
  fit->add_flag("--cv", fo.cv, "cross-validate the temperature (default)")->excludes(temp);
  fit->add_option("--config", fo.config, "key = value config");
  fit->add_option("--seed", fo.seed, "split seed")->each([&fo](const std::string&) { fo.seed_set = true; });
  fit->add_option("--noise-bound", fo.noise_bound, "noise level sigma_1")->check(CLI::PositiveNumber);
  fit->add_option("--out", fo.out, "member CSV path (default stdout)");
  fit->add_option("--meta", fo.meta, "metadata JSON path (default OUT.json, or stderr)");
  fit->add_option("--curve", fo.curve, "write (z, fhat) along the top direction");
  fit->add_option("--curve-points", fo.curve_points, "points in the curve dump");

  SimOptions so;
  auto* sim = app.add_subcommand("simulate", "replicate the simulation study for one sample size");
  add_sim_options(sim, so);
  sim->add_option("--n", so.n, "sample size");

  SimOptions bo;
  auto* bench = app.add_subcommand("bench", "sweep n over 100, 200, 400");
  add_sim_options(bench, bo);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand help requests arrive here as well.
    if (e.get_exit_code() == 0) {
      for (auto* sc : app.get_subcommands()) out << sc->help();
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (lat->parsed()) return cmd_lattice(lo, out);
    if (fit->parsed()) return cmd_fit(fo, out, err);
    if (sim->parsed()) return cmd_simulate(so, out);
    if (bench->parsed()) return cmd_bench(bo, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace sidx::cli
