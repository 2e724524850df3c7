#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "qsmc/errors.hpp"
#include "qsmc/experiment.hpp"

namespace qsmc {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::string& key) {
  std::string t = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("key '" + key + "': '" + text + "' is not a number");
  return v;
}

std::uint64_t parse_uint(const std::string& text, const std::string& key) {
  std::string t = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("key '" + key + "': '" + text + "' is not a non-negative integer");
  return v;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"engine", "qsmc"},
      {"model", "gaussian-location"},
      {"data", ""},
      {"synthetic_n", "0"},
      {"true_params", ""},
      {"data_seed", "1"},
      {"noise_sd", "1"},
      {"prior_mean", ""},
      {"prior_sd", ""},
      {"floor_box_lo", ""},
      {"floor_box_hi", ""},
      {"particles", "1024"},
      {"horizon", "10"},
      {"checkpoint_gap", "0.1"},
      {"ess_threshold", "0.5"},
      {"burn_in", "0"},
      {"seed", "1"},
      {"threads", "1"},
      {"resampler", "systematic"},
      {"theta_scale", "1"},
      {"event_rate_fraction", "1"},
      {"batch", "1"},
      {"kbm_layer_lower", "false"},
      {"floor_region_sd", "8"},
      {"precond", "default"},
      {"x_hat", "mode"},
      {"mode_start", "prior"},
      {"start", "x_hat"},
      {"output", "qsmc_out"},
  };
  return d;
}

Vec parse_vector(const std::string& text, const std::string& key) {
  std::vector<double> vals;
  std::string cell;
  std::istringstream is(text);
  while (std::getline(is, cell, ',')) vals.push_back(parse_double(cell, key));
  if (vals.empty()) throw ConfigError("key '" + key + "': empty list");
  return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin,
                              const std::string& base_dir) {
  std::map<std::string, std::string> values;
  for (const auto& [k, v] : config_defaults()) values[k] = v;

  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!values.count(key))
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    values[key] = value;
  }

  ExperimentConfig cfg;
  cfg.run.engine = parse_engine(values["engine"]);
  cfg.model.family = parse_family(values["model"]);
  cfg.model.noise_sd = parse_double(values["noise_sd"], "noise_sd");
  if (!values["prior_mean"].empty()) cfg.model.prior.mean = parse_vector(values["prior_mean"], "prior_mean");
  if (!values["prior_sd"].empty()) cfg.model.prior.sd = parse_vector(values["prior_sd"], "prior_sd");
  if (!values["floor_box_lo"].empty())
    cfg.model.floor_box_lo = parse_vector(values["floor_box_lo"], "floor_box_lo");
  if (!values["floor_box_hi"].empty())
    cfg.model.floor_box_hi = parse_vector(values["floor_box_hi"], "floor_box_hi");

  cfg.synthetic_n = parse_uint(values["synthetic_n"], "synthetic_n");
  if (!values["true_params"].empty()) cfg.true_params = parse_vector(values["true_params"], "true_params");
  cfg.data_seed = parse_uint(values["data_seed"], "data_seed");
  if (!values["data"].empty()) {
    std::filesystem::path p(values["data"]);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    if (!std::filesystem::is_regular_file(p))
      throw ConfigError("data file '" + p.string() + "' does not exist");
    cfg.data_path = p.string();
    if (cfg.synthetic_n > 0) throw ConfigError("set either data or synthetic_n, not both");
  } else if (cfg.synthetic_n == 0) {
    throw ConfigError("no data: set data = <csv> or synthetic_n with true_params");
  } else if (cfg.true_params.size() == 0) {
    throw ConfigError("synthetic data needs true_params");
  }

  cfg.run.particles = parse_uint(values["particles"], "particles");
  cfg.run.horizon = parse_double(values["horizon"], "horizon");
  cfg.run.checkpoint_gap = parse_double(values["checkpoint_gap"], "checkpoint_gap");
  cfg.run.ess_threshold = parse_double(values["ess_threshold"], "ess_threshold");
  cfg.run.burn_in = parse_double(values["burn_in"], "burn_in");
  cfg.run.seed = parse_uint(values["seed"], "seed");
  cfg.run.threads = static_cast<int>(parse_uint(values["threads"], "threads"));
  cfg.run.resampler = parse_resampler(values["resampler"]);
  cfg.run.theta_scale = parse_double(values["theta_scale"], "theta_scale");
  cfg.run.event_rate_fraction = parse_double(values["event_rate_fraction"], "event_rate_fraction");
  cfg.run.kbm.use_layer_lower = parse_bool(values["kbm_layer_lower"], "kbm_layer_lower");
  cfg.batch = static_cast<int>(parse_uint(values["batch"], "batch"));
  if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
  cfg.floor_region_sd = parse_double(values["floor_region_sd"], "floor_region_sd");
  if (!(cfg.floor_region_sd > 0.0)) throw ConfigError("floor_region_sd must be > 0");

  const std::string& pc = values["precond"];
  if (pc == "default" || pc == "identity" || pc == "scaled" || pc == "info") {
    cfg.precond = pc;
  } else {
    cfg.precond = "explicit";
    cfg.precond_diag = parse_vector(pc, "precond");
    if ((cfg.precond_diag.array() <= 0.0).any()) throw ConfigError("precond entries must be > 0");
  }
  if (values["x_hat"] != "mode") cfg.x_hat = parse_vector(values["x_hat"], "x_hat");
  if (values["mode_start"] != "prior") cfg.mode_start = parse_vector(values["mode_start"], "mode_start");
  if (values["start"] != "x_hat") cfg.start = parse_vector(values["start"], "start");
  cfg.output = values["output"];
  if (cfg.output.empty()) throw ConfigError("output must not be empty");
  cfg.run.validate();

  for (const auto& [k, v] : config_defaults()) cfg.echo.emplace_back(k, values[k]);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  auto base = std::filesystem::path(path).parent_path();
  return parse_config(buf.str(), path, base.empty() ? "." : base.string());
}

}  // namespace qsmc
