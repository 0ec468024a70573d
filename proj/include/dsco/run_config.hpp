#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsco/classifier.hpp"
#include "dsco/denoiser.hpp"
#include "dsco/nopt.hpp"
#include "dsco/projector.hpp"
#include "dsco/toy_data.hpp"

namespace dsco {

/// Everything a pipeline command needs. Serialized as flat `key = value`
/// lines; see RunConfig::keys() for the accepted keys.
struct RunConfig {
  AlignMode mode = AlignMode::data_accessible;
  std::string output_dir;  // empty: $DSCO_OUTPUT_ROOT, else ./dsco_out
  std::uint64_t seed = 0;

  MixtureSpec data{2, 2, 200, Shape3{1, 1, 2}, 0, 0.05, 3.0, 0.5, 2.0};
  std::size_t test_per_class = 500;

  ScheduleKind schedule_kind = ScheduleKind::linear;
  std::size_t schedule_steps = 50;

  DenoiserConfig denoiser;
  ProjectorConfig projector;
  NOptConfig nopt;

  std::size_t ipc = 10;
  std::vector<std::size_t> dope_schedule{10, 50, 100, 150};
  bool dope_enabled = true;
  bool dope_per_class = true;
  std::size_t n_groups = 5;

  ClassifierConfig classifier;
  double temperature = 1.0;

  std::size_t bias_n_exp = 500;
  std::vector<std::size_t> bias_sizes{10, 50, 100};

  /// Ordered list of every accepted key.
  static const std::vector<std::string>& keys();

  /// Typed assignment; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Throws ConfigError when the combination is invalid.
  void validate() const;

  std::string serialize() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// output_dir resolved against the environment default.
  std::filesystem::path resolved_output_dir() const;

  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.serialize() == b.serialize(); }
};

}  // namespace dsco
