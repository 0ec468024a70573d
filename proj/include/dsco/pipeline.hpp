#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsco/doping.hpp"
#include "dsco/run_config.hpp"

namespace dsco::pipeline {

// Artifact names inside the output directory.
inline constexpr const char* kCheckpoint = "model.dsco";
inline constexpr const char* kConcentrated = "concentrated.dsco";
inline constexpr const char* kDiagnostics = "diagnostics.csv";
inline constexpr const char* kGainCurve = "gain_curve.csv";
inline constexpr const char* kConfusion = "confusion.csv";
inline constexpr const char* kDoped = "doped.dsco";
inline constexpr const char* kDopeConfusion = "dope_confusion.csv";
inline constexpr const char* kGroups = "groups.csv";
inline constexpr const char* kBias = "bias.csv";

struct CommandResult {
  std::vector<std::filesystem::path> artifacts;
  std::string summary;
};

/// Training split and an independent test split from the same mixture.
ToyDataset target_set(const RunConfig& cfg);
ToyDataset test_set(const RunConfig& cfg);

NoiseSchedule schedule_for(const RunConfig& cfg);
RandomProjector projector_for(const RunConfig& cfg);

/// Teacher: trained to convergence on the full target set with hard labels.
Classifier train_teacher(const ToyDataset& targets, const RunConfig& cfg);

/// Student / downstream model trained on `samples` with the teacher's soft labels.
Classifier train_student(const Classifier& teacher, const Eigen::Ref<const Matrix>& samples, const RunConfig& cfg,
                         std::uint64_t seed);

struct Synthesis {
  Matrix samples;
  std::vector<int> labels;
  NOptTrace trace;
};

/// `ipc` NOpt surrogates per class, class blocks in order.
Synthesis synthesize(const DenoiserModel& model, const NoiseSchedule& schedule, const RandomProjector& projector,
                     const ToyDataset& targets, const RunConfig& cfg, std::size_t ipc);

/// Confusion records of every target under (teacher, student).
std::vector<ConfusionRecord> score_targets(const Classifier& teacher, const Classifier& student,
                                           const ToyDataset& targets, const RunConfig& cfg);

/// Refuses (RefusalError) when any path exists and force is false.
void ensure_writable(const std::vector<std::filesystem::path>& paths, bool force);

CommandResult cmd_train_diffusion(const RunConfig& cfg, bool force);
CommandResult cmd_concentrate(const RunConfig& cfg, bool force);
/// Dopes the k highest-confusion real samples (per class when configured)
/// into the dataset at `input` (default: the concentrated dataset).
CommandResult cmd_dope(const RunConfig& cfg, std::size_t k, const std::optional<std::filesystem::path>& input,
                       bool force);
CommandResult cmd_eval(const RunConfig& cfg, const std::optional<std::filesystem::path>& input, bool force);
CommandResult cmd_bias_demo(const RunConfig& cfg, bool force);

}  // namespace dsco::pipeline
