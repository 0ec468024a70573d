#include "dsco/run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dsco {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(parse_uint(key, trim(item))));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field size_field(std::string key, T RunConfig::*member) {
  return {std::move(key), [member](const RunConfig& c) { return std::to_string(c.*member); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = static_cast<T>(parse_uint(k, v)); }};
}

// Accessor-based fields for nested members.
Field uint_field(std::string key, std::function<std::size_t&(RunConfig&)> ref) {
  return {std::move(key), [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = static_cast<std::size_t>(parse_uint(k, v)); }};
}

Field u64_field(std::string key, std::function<std::uint64_t&(RunConfig&)> ref) {
  return {std::move(key), [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_uint(k, v); }};
}

Field real_field(std::string key, std::function<double&(RunConfig&)> ref) {
  return {std::move(key), [ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_double(k, v); }};
}

Field bool_field(std::string key, std::function<bool&(RunConfig&)> ref) {
  return {std::move(key), [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)) ? "true" : "false"; },
          [ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_bool(k, v); }};
}

Field list_field(std::string key, std::function<std::vector<std::size_t>&(RunConfig&)> ref) {
  return {std::move(key), [ref](const RunConfig& c) { return fmt_list(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_list(k, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"mode", [](const RunConfig& c) { return to_string(c.mode); },
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.mode = parse_align_mode(v);
         c.nopt.mode = c.mode;
       }},
      {"output_dir", [](const RunConfig& c) { return c.output_dir; },
       [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      u64_field("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }),

      uint_field("data.n_classes", [](RunConfig& c) -> std::size_t& { return c.data.n_classes; }),
      uint_field("data.modes_per_class", [](RunConfig& c) -> std::size_t& { return c.data.modes_per_class; }),
      uint_field("data.n_per_class", [](RunConfig& c) -> std::size_t& { return c.data.n_per_class; }),
      uint_field("data.channels", [](RunConfig& c) -> std::size_t& { return c.data.shape.channels; }),
      uint_field("data.height", [](RunConfig& c) -> std::size_t& { return c.data.shape.height; }),
      uint_field("data.width", [](RunConfig& c) -> std::size_t& { return c.data.shape.width; }),
      real_field("data.outlier_frac", [](RunConfig& c) -> double& { return c.data.outlier_frac; }),
      real_field("data.center_scale", [](RunConfig& c) -> double& { return c.data.center_scale; }),
      real_field("data.mode_std", [](RunConfig& c) -> double& { return c.data.mode_std; }),
      real_field("data.min_separation", [](RunConfig& c) -> double& { return c.data.min_separation; }),
      size_field("data.test_per_class", &RunConfig::test_per_class),

      {"schedule.kind", [](const RunConfig& c) { return to_string(c.schedule_kind); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.schedule_kind = parse_schedule_kind(v); }},
      size_field("schedule.steps", &RunConfig::schedule_steps),

      uint_field("denoiser.hidden", [](RunConfig& c) -> std::size_t& { return c.denoiser.hidden; }),
      uint_field("denoiser.time_dim", [](RunConfig& c) -> std::size_t& { return c.denoiser.time_dim; }),
      uint_field("denoiser.iterations", [](RunConfig& c) -> std::size_t& { return c.denoiser.iterations; }),
      uint_field("denoiser.batch", [](RunConfig& c) -> std::size_t& { return c.denoiser.batch; }),
      real_field("denoiser.lr", [](RunConfig& c) -> double& { return c.denoiser.lr; }),
      real_field("denoiser.mse_threshold", [](RunConfig& c) -> double& { return c.denoiser.mse_threshold; }),
      uint_field("denoiser.max_rounds", [](RunConfig& c) -> std::size_t& { return c.denoiser.max_rounds; }),

      list_field("projector.widths", [](RunConfig& c) -> std::vector<std::size_t>& { return c.projector.widths; }),
      uint_field("projector.groups", [](RunConfig& c) -> std::size_t& { return c.projector.groups; }),
      real_field("projector.slope", [](RunConfig& c) -> double& { return c.projector.slope; }),

      real_field("nopt.lambda_align", [](RunConfig& c) -> double& { return c.nopt.lambda_align; }),
      real_field("nopt.lambda_stats", [](RunConfig& c) -> double& { return c.nopt.lambda_stats; }),
      real_field("nopt.lambda_maxoc", [](RunConfig& c) -> double& { return c.nopt.lambda_maxoc; }),
      uint_field("nopt.inner_steps", [](RunConfig& c) -> std::size_t& { return c.nopt.inner_steps; }),
      real_field("nopt.inner_lr", [](RunConfig& c) -> double& { return c.nopt.inner_lr; }),
      real_field("nopt.inner_momentum", [](RunConfig& c) -> double& { return c.nopt.inner_momentum; }),
      uint_field("nopt.min_diff_ratio", [](RunConfig& c) -> std::size_t& { return c.nopt.min_diff_ratio; }),
      uint_field("nopt.n_temp", [](RunConfig& c) -> std::size_t& { return c.nopt.n_temp; }),
      uint_field("nopt.step_stride", [](RunConfig& c) -> std::size_t& { return c.nopt.step_stride; }),

      size_field("ipc", &RunConfig::ipc),
      list_field("dope.schedule", [](RunConfig& c) -> std::vector<std::size_t>& { return c.dope_schedule; }),
      bool_field("dope.enabled", [](RunConfig& c) -> bool& { return c.dope_enabled; }),
      bool_field("dope.per_class", [](RunConfig& c) -> bool& { return c.dope_per_class; }),
      size_field("dope.n_groups", &RunConfig::n_groups),

      uint_field("classifier.hidden", [](RunConfig& c) -> std::size_t& { return c.classifier.hidden; }),
      uint_field("classifier.epochs", [](RunConfig& c) -> std::size_t& { return c.classifier.epochs; }),
      uint_field("classifier.batch", [](RunConfig& c) -> std::size_t& { return c.classifier.batch; }),
      real_field("classifier.lr", [](RunConfig& c) -> double& { return c.classifier.lr; }),
      real_field("classifier.temperature", [](RunConfig& c) -> double& { return c.temperature; }),

      size_field("bias.n_exp", &RunConfig::bias_n_exp),
      list_field("bias.sizes", [](RunConfig& c) -> std::vector<std::size_t>& { return c.bias_sizes; }),
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key: " + key);
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) { find_field(key).set(*this, key, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

void RunConfig::validate() const {
  if (nopt.mode != mode) throw ConfigError("config: nopt mode out of sync with mode");
  nopt.validate();
  if (data.n_classes < 2) throw ConfigError("data.n_classes must be >= 2");
  if (data.dim() < 2) throw ConfigError("data shape must hold >= 2 values");
  if (schedule_steps == 0) throw ConfigError("schedule.steps must be >= 1");
  if (ipc == 0) throw ConfigError("ipc must be >= 1");
  if (ipc > data.n_per_class) throw ConfigError("ipc exceeds the samples available per class");
  for (std::size_t i = 1; i < dope_schedule.size(); ++i)
    if (dope_schedule[i] <= dope_schedule[i - 1]) throw ConfigError("dope.schedule must be strictly increasing");
  if (n_groups == 0) throw ConfigError("dope.n_groups must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("classifier.temperature must be > 0");
  if (classifier.epochs == 0 || classifier.batch == 0) throw ConfigError("classifier epochs/batch must be >= 1");
  if (denoiser.iterations == 0 || denoiser.batch == 0) throw ConfigError("denoiser iterations/batch must be >= 1");
  if (bias_n_exp == 0) throw ConfigError("bias.n_exp must be >= 1");
  for (auto n : bias_sizes)
    if (n == 0) throw ConfigError("bias.sizes entries must be >= 1");
  if (projector.widths.size() < 3 || projector.widths.size() > 4) throw ConfigError("projector.widths needs 3 or 4 entries");
  for (auto w : projector.widths)
    if (projector.groups == 0 || w % projector.groups != 0)
      throw ConfigError("projector.widths must be divisible by projector.groups");
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + key);
    cfg.set(key, body.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::filesystem::path RunConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* root = std::getenv("DSCO_OUTPUT_ROOT"); root && *root) return root;
  return "dsco_out";
}

}  // namespace dsco
