#include "ntkpinn/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "ntkpinn/error.hpp"
#include "ntkpinn/ntk.hpp"

namespace ntkpinn {

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::kPoissonConvergence:
      return "poisson-convergence";
    case Experiment::kQuadraticMc:
      return "quadratic-mc";
    case Experiment::kWavePinn:
      return "wave-pinn";
  }
  return "?";
}

Experiment experiment_from_string(std::string_view name) {
  if (name == "poisson-convergence") return Experiment::kPoissonConvergence;
  if (name == "quadratic-mc") return Experiment::kQuadraticMc;
  if (name == "wave-pinn") return Experiment::kWavePinn;
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[v & 0xf];
    v >>= 4;
  }
  return std::string(buf, 16);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& raw, const std::string& what) {
  const std::string s = trim(raw);
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("invalid value '" + raw + "' for " + what);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError("non-finite value for " + what);
  }
  return v;
}

bool parse_bool(const std::string& raw, const std::string& what) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("invalid boolean '" + raw + "' for " + what);
}

template <class T>
std::vector<T> parse_list(const std::string& raw, const std::string& what) {
  std::vector<T> out;
  for (const auto& item : split_list(raw)) out.push_back(parse_number<T>(item, what));
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

std::string b2s(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string section;
  std::string key;
  int pass;  // keys of pass 1 may depend on pass 0 keys
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define NTK_DOUBLE(member) \
  [](const ExperimentConfig& c) { return format_double(c.member); }, \
      [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.member = parse_number<double>(v, w); }
#define NTK_SIZE(member) \
  [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
      [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.member = parse_number<std::size_t>(v, w); }
#define NTK_BOOL(member) \
  [](const ExperimentConfig& c) { return b2s(c.member); }, \
      [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.member = parse_bool(v, w); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"experiment", "name", 0, [](const ExperimentConfig& c) { return std::string(to_string(c.experiment)); },
       [](ExperimentConfig& c, const std::string& v, const std::string&) { c.experiment = experiment_from_string(trim(v)); }},
      {"experiment", "seed", 0, [](const ExperimentConfig& c) { return std::to_string(c.seed); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.seed = parse_number<std::uint64_t>(v, w); }},

      {"problem", "groups", 0,
       [](const ExperimentConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.group_counts.size(); ++i) {
           s += (i ? ", " : "") + c.group_counts[i].first + ":" + std::to_string(c.group_counts[i].second);
         }
         return s;
       },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) {
         c.group_counts.clear();
         for (const auto& item : split_list(v)) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) throw ConfigError("expected name:count in " + w + ", got '" + item + "'");
           c.group_counts.emplace_back(trim(item.substr(0, colon)), parse_number<std::size_t>(item.substr(colon + 1), w));
         }
       }},
      {"problem", "interior_points", 0, [](const ExperimentConfig& c) { return join_doubles(c.interior_points); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.interior_points = parse_list<double>(v, w); }},
      {"problem", "wave_speed_sq", 0, NTK_DOUBLE(wave_speed_sq)},
      {"problem", "regression_points", 0, NTK_SIZE(regression_points)},
      {"problem", "noise_std", 0, NTK_DOUBLE(noise_std)},

      {"model", "hidden", 0, [](const ExperimentConfig& c) { return join_sizes(c.hidden); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.hidden = parse_list<std::size_t>(v, w); }},

      {"train", "eta", 0, NTK_DOUBLE(train.eta)},
      {"train", "steps", 0, NTK_SIZE(train.steps)},
      {"train", "mode", 0, [](const ExperimentConfig& c) { return std::string(to_string(c.train.mode)); },
       [](ExperimentConfig& c, const std::string& v, const std::string&) { c.train.mode = weight_mode_from_string(trim(v)); }},
      {"train", "update_every", 0, NTK_SIZE(train.update_every)},
      {"train", "resample", 0, NTK_BOOL(train.resample)},
      {"train", "spaced", 0, [](const ExperimentConfig& c) { return b2s(c.train.spaced.has_value()); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) {
         if (!parse_bool(v, w)) {
           c.train.spaced.reset();
         } else if (!c.train.spaced) {
           c.train.spaced.emplace();
         }
       }},
      {"train", "spaced_c", 1,
       [](const ExperimentConfig& c) { return format_double(c.train.spaced ? c.train.spaced->c : SpacedUpdateConfig{}.c); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) {
         const double x = parse_number<double>(v, w);
         if (c.train.spaced) c.train.spaced->c = x;
       }},
      {"train", "spaced_q", 1,
       [](const ExperimentConfig& c) { return format_double(c.train.spaced ? c.train.spaced->q : SpacedUpdateConfig{}.q); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) {
         const double x = parse_number<double>(v, w);
         if (c.train.spaced) c.train.spaced->q = x;
       }},
      {"train", "initial_weights", 0, [](const ExperimentConfig& c) { return join_doubles(c.train.initial_weights); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) {
         c.train.initial_weights = parse_list<double>(v, w);
       }},
      {"train", "record_eigenvalues", 0, NTK_BOOL(train.record_eigenvalues)},
      {"train", "eig_every", 0, NTK_SIZE(train.eig_every)},
      {"train", "exact_trace_every", 0, NTK_SIZE(train.exact_trace_every)},
      {"train", "snapshot_every", 0, NTK_SIZE(train.snapshot_every)},
      {"train", "record_wall_time", 0, NTK_BOOL(train.record_wall_time)},

      {"sketch", "dt", 0, NTK_DOUBLE(train.sketch.dt)},
      {"sketch", "mask_threshold", 0, NTK_DOUBLE(train.sketch.mask_threshold)},
      {"sketch", "init_samples", 0, NTK_SIZE(train.sketch_init_samples)},
      {"sketch", "alpha", 0, NTK_DOUBLE(train.alpha)},
      {"sketch", "accumulator", 0, [](const ExperimentConfig& c) { return std::string(to_string(c.train.accumulator)); },
       [](ExperimentConfig& c, const std::string& v, const std::string&) {
         c.train.accumulator = accumulator_mode_from_string(trim(v));
       }},
      {"sketch", "alt_eps", 0, NTK_DOUBLE(alt_trace.eps)},

      {"quadratic", "mean_samples", 0, [](const ExperimentConfig& c) { return join_sizes(c.mean_samples); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.mean_samples = parse_list<std::size_t>(v, w); }},
      {"quadratic", "rate_samples", 0, [](const ExperimentConfig& c) { return join_sizes(c.rate_samples); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.rate_samples = parse_list<std::size_t>(v, w); }},
      {"quadratic", "replicates", 0, NTK_SIZE(replicates)},
      {"quadratic", "theta0", 0, [](const ExperimentConfig& c) { return join_doubles(c.theta0); },
       [](ExperimentConfig& c, const std::string& v, const std::string& w) { c.theta0 = parse_list<double>(v, w); }},
      {"quadratic", "predictor_grid", 0, NTK_SIZE(predictor_grid)},

      {"poisson", "certificate_run", 0, NTK_BOOL(certificate_run)},
      {"poisson", "certificate_steps", 0, NTK_SIZE(certificate_steps)},

      {"wave", "grid", 0, NTK_SIZE(grid_per_dim)},

      {"output", "dir", 0, [](const ExperimentConfig& c) { return c.output_dir.string(); },
       [](ExperimentConfig& c, const std::string& v, const std::string&) { c.output_dir = trim(v); }},
  };
  return table;
}

#undef NTK_DOUBLE
#undef NTK_SIZE
#undef NTK_BOOL

std::string render(const ExperimentConfig& cfg, bool identity_only) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (identity_only && ((f.section == "experiment" && f.key == "seed") || f.section == "output")) continue;
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  alt_trace.validate();
  if (hidden.empty() && experiment != Experiment::kQuadraticMc) throw ConfigError("model.hidden must list at least one width");
  for (auto w : hidden) {
    if (w == 0) throw ConfigError("hidden widths must be positive");
  }
  for (const auto& [name, count] : group_counts) {
    if (count == 0) throw ConfigError("group '" + name + "' has no points");
  }
  if (!(wave_speed_sq > 0.0)) throw ConfigError("wave_speed_sq must be positive");
  if (regression_points < 2) throw ConfigError("regression needs at least two points");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be nonnegative");
  if (experiment == Experiment::kQuadraticMc) {
    if (theta0.size() != 3) throw ConfigError("quadratic.theta0 needs three values");
    if (mean_samples.empty() || rate_samples.size() < 2) throw ConfigError("quadratic sample lists are too short");
    for (auto n : mean_samples) {
      if (n == 0) throw ConfigError("sample counts must be positive");
    }
    for (auto n : rate_samples) {
      if (n == 0) throw ConfigError("sample counts must be positive");
    }
    if (replicates < 2) throw ConfigError("quadratic.replicates must be at least 2");
    if (predictor_grid < 2) throw ConfigError("quadratic.predictor_grid must be at least 2");
  }
  if (grid_per_dim < 2) throw ConfigError("wave.grid must be at least 2");
  if (output_dir.empty()) throw ConfigError("output.dir is empty");
}

std::string ExperimentConfig::to_ini() const { return render(*this, false); }

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : render(*this, true)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig default_config(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::kPoissonConvergence:
      c.hidden = {100};
      c.train.eta = 1e-5;
      c.train.steps = 2000;
      c.train.mode = WeightMode::kExactNtk;
      c.train.record_eigenvalues = true;
      c.train.snapshot_every = 10;
      break;
    case Experiment::kQuadraticMc:
      c.train.eta = 1e-3;
      c.train.steps = 100000;
      c.train.mode = WeightMode::kSketch;
      c.train.alpha = 1e-4;
      c.train.sketch_init_samples = 100;
      c.train.accumulator = AccumulatorMode::kFullMatrix;
      break;
    case Experiment::kWavePinn:
      c.hidden = {64, 64};
      c.train.eta = 5e-6;
      c.train.steps = 5000;
      c.train.mode = WeightMode::kSketch;
      c.train.resample = true;
      c.train.alpha = 1e-3;
      // About 1/alpha probes: boundary-block single-probe traces have sd near 5x
      // their mean, and a short initial average can start negative.
      c.train.sketch_init_samples = 1000;
      c.train.accumulator = AccumulatorMode::kTracesOnly;
      c.train.exact_trace_every = 50;
      break;
  }
  return c;
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }

  std::set<std::pair<std::string, std::string>> known;
  for (const auto& f : fields()) known.emplace(f.section, f.key);
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(body.data().empty() ? "empty section or key '" + section + "'"
                                            : "key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) {
      if (!known.contains({section, key})) throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
  }

  const auto name = tree.get_optional<std::string>("experiment.name");
  if (!name) throw ConfigError("config needs [experiment] name");
  ExperimentConfig cfg = default_config(experiment_from_string(trim(*name)));
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& f : fields()) {
      if (f.pass != pass) continue;
      const auto section = tree.get_child_optional(pt::ptree::path_type(f.section, '\0'));
      if (!section) continue;
      const auto value = section->get_child_optional(pt::ptree::path_type(f.key, '\0'));
      if (!value) continue;
      f.set(cfg, value->data(), f.section + "." + f.key);
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  return parse_config(in);
}

}  // namespace ntkpinn
