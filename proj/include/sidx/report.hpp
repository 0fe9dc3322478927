// Report files for simulation runs and the key-value experiment config
// format read by the command-line tool.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sidx/simbench.hpp"

namespace sidx {

inline constexpr const char* library_version = "0.1.0";

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest-safe round trip: 17 significant digits.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_vector(std::span<const double> v, char sep = ';') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_real(v[i]);
  }
  return s;
}

inline std::string replications_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "replication,data_seed";
  for (const auto& c : report.column_names()) out << ',' << c;
  out << ",ERM_exact,best_member,cv_temperature,sigma,truncation,members,preselect_iterations,top_direction,error\n";
  for (const auto& r : report.rows) {
    out << r.replication << ',' << r.data_seed;
    if (r.ok()) {
      for (double v : ExperimentReport::row_columns(r)) out << ',' << format_real(v);
      out << ',' << format_real(r.mise_erm_exact) << ',' << format_real(r.mise_best_member) << ','
          << format_real(r.cv_temperature) << ','
          << format_real(r.sigma) << ',' << format_real(r.truncation) << ',' << r.members << ','
          << r.preselect_iterations << ',' << format_vector(r.top_direction) << ",\n";
    } else {
      for (std::size_t j = 0; j < report.column_names().size() + 8; ++j) out << ',';
      // Errors never contain newlines; quotes are doubled per RFC 4180.
      std::string e = r.error;
      for (std::size_t p = 0; (p = e.find('"', p)) != std::string::npos; p += 2) e.insert(p, "\"");
      for (char& ch : e) {
        if (ch == '\n' || ch == '\r') ch = ' ';
      }
      out << ",\"" << e << "\"\n";
    }
  }
  return out.str();
}

// Rows "mean" and "sd"; sd cells stay empty below two successful rows.
inline std::string summary_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "statistic";
  for (const auto& c : report.column_names()) out << ',' << c;
  out << '\n';
  if (report.rows.empty()) return out.str();
  const Vector m = report.means();
  const Vector s = report.sds();
  auto row = [&](const char* name, const Vector& v) {
    out << name;
    for (double x : v) {
      out << ',';
      if (!std::isnan(x)) out << format_real(x);
    }
    out << '\n';
  };
  row("mean", m);
  row("sd", s);
  return out.str();
}

inline nlohmann::ordered_json config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["preset"] = c.preset;
  j["n"] = c.n;
  j["d"] = c.d;
  j["theta"] = c.theta;
  j["link"] = c.link.name();
  j["rsnr"] = c.rsnr;
  j["replications"] = c.replications;
  j["cv_temperatures"] = c.temperatures.values;
  j["fixed_temperatures"] = c.fixed_temperatures;
  j["erm_temperature"] = c.erm_temperature;
  j["smoothness"] = c.smoothness;
  j["radius"] = c.radius;
  j["degree"] = c.degree;
  j["s_min"] = c.s_min;
  j["train_fraction"] = c.train_fraction;
  if (c.noise_bound) {
    j["noise_bound"] = *c.noise_bound;
  } else {
    j["noise_bound"] = "sigma";
  }
  if (c.truncation) {
    j["truncation"] = *c.truncation;
  } else {
    j["truncation"] = "max_abs_training_response";
  }
  j["seed"] = c.seed;
  j["test_points"] = c.test_points;
  return j;
}

inline std::string metadata_json(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["library_version"] = library_version;
  j["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                       "." + std::to_string(EIGEN_MINOR_VERSION);
  j["config"] = config_json(report.config);
  j["cv_mode"] = to_string(report.cv_mode);
  j["mise_method"] = "monte_carlo_uniform_design";
  j["mise_draws"] = report.config.test_points;
  j["replications_succeeded"] = report.succeeded();
  j["wall_seconds"] = report.wall_seconds;
  nlohmann::ordered_json reps = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json e;
    e["replication"] = r.replication;
    e["data_seed"] = r.data_seed;
    e["truncation"] = r.truncation;
    e["sigma"] = r.sigma;
    reps.push_back(std::move(e));
  }
  j["replications"] = std::move(reps);
  return j.dump(2) + "\n";
}

inline void write_file(const std::filesystem::path& path, const std::string& content, bool force) {
  if (!force && std::filesystem::exists(path)) {
    throw ReportError(path.string() + ": file exists (use --force to overwrite)");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ReportError(path.string() + ": cannot open for writing");
  f << content;
  f.close();
  if (!f) throw ReportError(path.string() + ": write failed");
}

// Writes replications.csv, summary.csv and metadata.json into `dir`. Only
// the metadata carries wall-clock time, so the CSVs of a repeated run are
// byte-identical.
inline void emit_report(const ExperimentReport& report, const std::filesystem::path& dir,
                        bool force = false) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ReportError(dir.string() + ": " + ec.message());
  if (!force) {
    for (const char* name : {"replications.csv", "summary.csv", "metadata.json"}) {
      if (std::filesystem::exists(dir / name)) {
        throw ReportError((dir / name).string() + ": file exists (use --force to overwrite)");
      }
    }
  }
  write_file(dir / "replications.csv", replications_csv(report), true);
  write_file(dir / "summary.csv", summary_csv(report), true);
  write_file(dir / "metadata.json", metadata_json(report), true);
}

// ---------------------------------------------------------------------------
// key = value config files; '#' starts a comment. Lists are comma-separated.

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw InvalidConfig(where + ": expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw InvalidConfig(where + ": expected a number, got '" + v + "'");
  return x;
}

inline std::uint64_t parse_count(const std::string& v, const std::string& where) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw InvalidConfig(where + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw InvalidConfig(where + ": integer out of range '" + v + "'");
  }
}

inline Vector parse_list(const std::string& v, const std::string& where) {
  Vector out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(trim(item), where));
  if (out.empty()) throw InvalidConfig(where + ": empty list");
  return out;
}

inline CvMode parse_cv_mode(const std::string& v, const std::string& where) {
  if (v == "exact") return CvMode::exact_loo;
  if (v == "weights-only" || v == "weights_only") return CvMode::weights_only_loo;
  throw InvalidConfig(where + ": cv_mode must be exact or weights-only");
}

}  // namespace detail

// Applies one key to `cfg`. Setting `preset` resets every other field, so it
// belongs first in a file.
inline void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                             const std::string& where) {
  using namespace detail;
  if (key == "preset") {
    cfg = preset_config(value);
  } else if (key == "n") {
    cfg.n = parse_count(value, where);
  } else if (key == "d") {
    cfg.d = parse_count(value, where);
  } else if (key == "theta") {
    cfg.theta = normalized(parse_list(value, where));
  } else if (key == "link") {
    cfg.link = parse_link(value);
  } else if (key == "rsnr") {
    cfg.rsnr = parse_real(value, where);
  } else if (key == "replications") {
    cfg.replications = parse_count(value, where);
  } else if (key == "cv_temperatures") {
    cfg.temperatures.values = parse_list(value, where);
  } else if (key == "cv_mode") {
    if (value == "auto") {
      cfg.temperatures.cv_mode.reset();
    } else {
      cfg.temperatures.cv_mode = parse_cv_mode(value, where);
    }
  } else if (key == "fixed_temperatures") {
    cfg.fixed_temperatures = parse_list(value, where);
  } else if (key == "erm_temperature") {
    cfg.erm_temperature = parse_real(value, where);
  } else if (key == "smoothness") {
    cfg.smoothness = parse_list(value, where);
  } else if (key == "radius") {
    cfg.radius = parse_list(value, where);
  } else if (key == "degree") {
    cfg.degree = static_cast<int>(parse_count(value, where));
  } else if (key == "s_min") {
    cfg.s_min = parse_real(value, where);
  } else if (key == "train_fraction") {
    cfg.train_fraction = parse_real(value, where);
  } else if (key == "noise_bound") {
    if (value == "sigma") {
      cfg.noise_bound.reset();
    } else {
      cfg.noise_bound = parse_real(value, where);
    }
  } else if (key == "truncation") {
    if (value == "auto") {
      cfg.truncation.reset();
    } else {
      cfg.truncation = parse_real(value, where);
    }
  } else if (key == "seed") {
    cfg.seed = parse_count(value, where);
  } else if (key == "test_points") {
    cfg.test_points = parse_count(value, where);
  } else if (key == "threads") {
    cfg.threads = static_cast<unsigned>(parse_count(value, where));
  } else {
    throw InvalidConfig(where + ": unknown key '" + key + "'");
  }
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& name,
                                     ExperimentConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig(where + ": expected key = value");
    apply_config_key(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), where);
  }
  return cfg;
}

inline ExperimentConfig read_config_file(const std::filesystem::path& path, ExperimentConfig cfg = {}) {
  std::ifstream f(path);
  if (!f) throw InvalidConfig(path.string() + ": cannot open config file");
  return parse_config(f, path.string(), std::move(cfg));
}

}  // namespace sidx
