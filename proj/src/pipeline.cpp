#include "dsco/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dsco/bias_lab.hpp"
#include "dsco/metrics.hpp"
#include "dsco/tensor_block.hpp"
#include "json.hpp"

namespace dsco::pipeline {

namespace fs = std::filesystem;

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kTagTest = 0x7E57,
  kTagDenoiser = 0xD1,
  kTagProjector = 0x9C,
  kTagTeacher = 0x7C,
  kTagStudent = 0x57,
  kTagSynth = 0x50,
  kTagEval = 0xE7,
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_block(const fs::path& path, const TensorBlock& block) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_tensor_block(path, block);
}

std::vector<int> teacher_labels(const Classifier& teacher, const ToyDataset& targets) {
  return teacher.predict(targets.samples);
}

DenoiserModel load_model(const RunConfig& cfg, const NoiseSchedule& schedule) {
  const fs::path path = cfg.resolved_output_dir() / kCheckpoint;
  if (!fs::exists(path)) throw ConfigError("no checkpoint at " + path.string() + "; run train-diffusion first");
  NoiseSchedule stored = make_schedule(1, ScheduleKind::linear);
  DenoiserModel model = from_checkpoint(read_tensor_block(path), &stored);
  if (stored.kind() != schedule.kind() || stored.steps() != schedule.steps())
    throw ConfigError("checkpoint schedule differs from the configured schedule");
  if (!(model.shape() == cfg.data.shape) || model.n_classes() != cfg.data.n_classes)
    throw ConfigError("checkpoint shape/classes differ from the configured dataset");
  return model;
}

std::string diagnostics_csv(const NOptTrace& trace) {
  std::ostringstream os;
  os << "class,t,inner_iter,L_real,L_align,L_total\n";
  for (const auto& r : trace.rows)
    os << r.class_id << ',' << r.t << ',' << r.inner_iter << ',' << num(r.loss.real) << ',' << num(r.loss.align) << ','
       << num(r.loss.total()) << '\n';
  return os.str();
}

std::string confusion_csv(const std::vector<ConfusionRecord>& records) {
  std::ostringstream os;
  os << "index,class,score\n";
  for (const auto& r : records) os << r.sample_index << ',' << r.teacher_class << ',' << num(r.score) << '\n';
  return os.str();
}

ConcentratedDataset load_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("no dataset at " + path.string());
  return concentrated_from_tensor_block(read_tensor_block(path));
}

}  // namespace

ToyDataset target_set(const RunConfig& cfg) {
  MixtureSpec spec = cfg.data;
  spec.seed = cfg.seed;
  return make_gaussian_mixture(spec);
}

ToyDataset test_set(const RunConfig& cfg) {
  MixtureSpec spec = cfg.data;
  spec.seed = cfg.seed;
  return sample_mixture(make_mixture_structure(spec), cfg.test_per_class, derive_seed(cfg.seed, kTagTest));
}

NoiseSchedule schedule_for(const RunConfig& cfg) { return make_schedule(cfg.schedule_steps, cfg.schedule_kind); }

RandomProjector projector_for(const RunConfig& cfg) {
  ProjectorConfig pc = cfg.projector;
  pc.input = cfg.data.shape;
  return RandomProjector(derive_seed(cfg.seed, kTagProjector), pc);
}

Classifier train_teacher(const ToyDataset& targets, const RunConfig& cfg) {
  ClassifierConfig cc = cfg.classifier;
  cc.seed = derive_seed(cfg.seed, kTagTeacher);
  return train_classifier(targets.samples, targets.labels, targets.n_classes, cc);
}

Classifier train_student(const Classifier& teacher, const Eigen::Ref<const Matrix>& samples, const RunConfig& cfg,
                         std::uint64_t seed) {
  ClassifierConfig cc = cfg.classifier;
  cc.seed = seed;
  return train_classifier(samples, relabel(teacher, samples, cfg.temperature), cc);
}

Synthesis synthesize(const DenoiserModel& model, const NoiseSchedule& schedule, const RandomProjector& projector,
                     const ToyDataset& targets, const RunConfig& cfg, std::size_t ipc) {
  Synthesis out;
  out.samples.resize(static_cast<Eigen::Index>(ipc * targets.n_classes), static_cast<Eigen::Index>(model.dim()));
  for (std::size_t c = 0; c < targets.n_classes; ++c) {
    const int cls = static_cast<int>(c);
    const std::uint64_t seed = derive_seed(cfg.seed, kTagSynth, c, ipc);
    Matrix block;
    if (cfg.mode == AlignMode::data_accessible) {
      const Matrix class_targets = targets.class_samples(cls);
      block = nopt_synthesize(model, schedule, projector, cls, ipc, cfg.nopt, Eigen::Ref<const Matrix>(class_targets),
                              seed, &out.trace);
    } else {
      block = nopt_synthesize(model, schedule, projector, cls, ipc, cfg.nopt, std::nullopt, seed, &out.trace);
    }
    out.samples.middleRows(static_cast<Eigen::Index>(c * ipc), static_cast<Eigen::Index>(ipc)) = block;
    out.labels.insert(out.labels.end(), ipc, cls);
  }
  return out;
}

std::vector<ConfusionRecord> score_targets(const Classifier& teacher, const Classifier& student,
                                           const ToyDataset& targets, const RunConfig& cfg) {
  return confusion_scores(teacher.predict_proba(targets.samples, cfg.temperature),
                          student.predict_proba(targets.samples, cfg.temperature));
}

void ensure_writable(const std::vector<fs::path>& paths, bool force) {
  if (force) return;
  for (const auto& p : paths)
    if (fs::exists(p)) throw RefusalError("refusing to overwrite " + p.string() + " (pass --force)");
}

CommandResult cmd_train_diffusion(const RunConfig& cfg, bool force) {
  cfg.validate();
  const fs::path out = cfg.resolved_output_dir() / kCheckpoint;
  ensure_writable({out}, force);
  const ToyDataset targets = target_set(cfg);
  const NoiseSchedule schedule = schedule_for(cfg);
  DenoiserConfig dc = cfg.denoiser;
  dc.seed = derive_seed(cfg.seed, kTagDenoiser);
  DenoiserTrainingReport report;
  const DenoiserModel model =
      train_denoiser(targets.samples, targets.labels, targets.shape, targets.n_classes, schedule, dc, &report);
  write_block(out, to_checkpoint(model, schedule, dc.seed));
  return {{out}, "trained denoiser, held-out epsilon MSE " + num(report.heldout_mse)};
}

CommandResult cmd_concentrate(const RunConfig& cfg, bool force) {
  cfg.validate();
  const fs::path dir = cfg.resolved_output_dir();
  std::vector<std::size_t> points;
  for (auto p : cfg.dope_schedule)
    if (p < cfg.ipc) points.push_back(p);
  points.push_back(cfg.ipc);
  const bool evaluate_trigger = cfg.dope_enabled && points.size() >= 2;
  if (evaluate_trigger && cfg.mode == AlignMode::data_free)
    throw RefusalError(
        "doping needs the real target data, which data_free mode does not read; "
        "set dope.enabled=false or an ipc at or below the first dope.schedule point");

  std::vector<fs::path> outputs{dir / kConcentrated, dir / kDiagnostics};
  if (evaluate_trigger) outputs.insert(outputs.end(), {dir / kGainCurve, dir / kConfusion});
  ensure_writable(outputs, force);

  const NoiseSchedule schedule = schedule_for(cfg);
  const DenoiserModel model = load_model(cfg, schedule);
  const RandomProjector projector = projector_for(cfg);
  const ToyDataset targets = target_set(cfg);
  const std::size_t n_classes = targets.n_classes;

  nlohmann::json prov;
  prov["mode"] = to_string(cfg.mode);
  prov["seed"] = cfg.seed;
  prov["ipc"] = cfg.ipc;
  // Where the artifacts live is not part of what produced them.
  RunConfig recorded = cfg;
  recorded.output_dir.clear();
  prov["config"] = recorded.serialize();

  CommandResult result;
  ConcentratedDataset dataset;
  const Synthesis* final_synth = nullptr;
  std::vector<Synthesis> synths;
  if (!evaluate_trigger) {
    synths.push_back(synthesize(model, schedule, projector, targets, cfg, cfg.ipc));
    final_synth = &synths.back();
    prov["trigger"] = "not evaluated";
    prov["synthetic_ipc"] = cfg.ipc;
    dataset = compose_concentrated(final_synth->samples, final_synth->labels, {}, targets.samples, targets.labels,
                                   targets.shape, n_classes, cfg.ipc, prov.dump());
  } else {
    const Classifier teacher = train_teacher(targets, cfg);
    const std::vector<int> t_labels = teacher_labels(teacher, targets);
    std::vector<Classifier> students;
    std::vector<double> sizes, recognized;
    for (auto p : points) {
      synths.push_back(synthesize(model, schedule, projector, targets, cfg, p));
      students.push_back(train_student(teacher, synths.back().samples, cfg, derive_seed(cfg.seed, kTagStudent, p)));
      sizes.push_back(static_cast<double>(p * n_classes));
      recognized.push_back(static_cast<double>(recognized_count(students.back(), targets.samples, t_labels)));
    }
    const MarginalGainCurve curve = make_gain_curve(sizes, recognized);
    const auto trigger = dope_trigger(curve);

    std::ostringstream gain;
    gain << "ipc,size,recognized,gain\n";
    for (std::size_t i = 0; i < points.size(); ++i)
      gain << points[i] << ',' << num(sizes[i]) << ',' << num(recognized[i]) << ','
           << (i + 1 < points.size() ? num(curve.gains[i]) : "") << '\n';
    write_text(dir / kGainCurve, gain.str());
    result.artifacts.push_back(dir / kGainCurve);
    prov["gains"] = curve.gains;

    if (trigger) {
      const std::size_t i = trigger->interval;
      const std::size_t synth_ipc = points[i];
      const std::size_t k = cfg.ipc - synth_ipc;
      final_synth = &synths[i];
      const auto records = score_targets(teacher, students[i], targets, cfg);
      write_text(dir / kConfusion, confusion_csv(records));
      result.artifacts.push_back(dir / kConfusion);
      const IndexVector doped =
          select_far_apart(records, cfg.dope_per_class ? k : k * n_classes, cfg.dope_per_class);
      prov["trigger"] = "triggered";
      prov["trigger_interval"] = i;
      prov["synthetic_ipc"] = synth_ipc;
      dataset = compose_concentrated(final_synth->samples, final_synth->labels, doped, targets.samples,
                                     targets.labels, targets.shape, n_classes, cfg.ipc, prov.dump());
    } else {
      final_synth = &synths.back();
      prov["trigger"] = "not triggered";
      prov["synthetic_ipc"] = cfg.ipc;
      dataset = compose_concentrated(final_synth->samples, final_synth->labels, {}, targets.samples, targets.labels,
                                     targets.shape, n_classes, cfg.ipc, prov.dump());
    }
  }

  write_block(dir / kConcentrated, to_tensor_block(dataset));
  write_text(dir / kDiagnostics, diagnostics_csv(final_synth->trace));
  result.artifacts.insert(result.artifacts.begin(), {dir / kConcentrated, dir / kDiagnostics});
  result.summary = "concentrated " + std::to_string(dataset.size()) + " samples (" +
                   std::to_string(dataset.n_synthetic) + " synthetic, " + std::to_string(dataset.doped_indices.size()) +
                   " doped)";
  return result;
}

CommandResult cmd_dope(const RunConfig& cfg, std::size_t k, const std::optional<fs::path>& input, bool force) {
  cfg.validate();
  if (cfg.mode == AlignMode::data_free)
    throw RefusalError("doping selects real target samples, which data_free mode does not read");
  const fs::path dir = cfg.resolved_output_dir();
  const fs::path in = input.value_or(dir / kConcentrated);
  const std::vector<fs::path> outputs{dir / kDoped, dir / kDopeConfusion, dir / kGroups};
  ensure_writable(outputs, force);

  const ConcentratedDataset base = load_dataset(in);
  const ToyDataset targets = target_set(cfg);
  if (!(base.shape == targets.shape) || base.n_classes != targets.n_classes)
    throw ConfigError("dataset at " + in.string() + " does not match the configured target set");

  const Classifier teacher = train_teacher(targets, cfg);
  const Classifier student = train_student(teacher, base.samples, cfg, derive_seed(cfg.seed, kTagStudent, base.size()));
  const auto all = score_targets(teacher, student, targets, cfg);

  std::vector<ConfusionRecord> candidates;
  std::vector<char> taken(targets.size(), 0);
  for (auto i : base.doped_indices) taken[i] = 1;
  for (const auto& r : all)
    if (!taken[r.sample_index]) candidates.push_back(r);
  IndexVector doped = base.doped_indices;
  for (auto i : select_far_apart(candidates, k, cfg.dope_per_class)) doped.push_back(i);

  nlohmann::json prov = nlohmann::json::parse(base.provenance);
  prov["dope_k"] = k;
  prov["dope_source"] = in.filename().string();
  const ConcentratedDataset out = compose_concentrated(
      base.samples.topRows(static_cast<Eigen::Index>(base.n_synthetic)),
      std::vector<int>(base.labels.begin(), base.labels.begin() + static_cast<std::ptrdiff_t>(base.n_synthetic)),
      doped, targets.samples, targets.labels, targets.shape, targets.n_classes, std::nullopt, prov.dump());

  const Matrix groups = mutual_l2_by_group(targets.samples, all, cfg.n_groups);
  std::ostringstream gs;
  gs << "group";
  for (Eigen::Index j = 0; j < groups.cols(); ++j) gs << ",g" << j;
  gs << '\n';
  for (Eigen::Index i = 0; i < groups.rows(); ++i) {
    gs << 'g' << i;
    for (Eigen::Index j = 0; j < groups.cols(); ++j) gs << ',' << num(groups(i, j));
    gs << '\n';
  }

  write_block(dir / kDoped, to_tensor_block(out));
  write_text(dir / kDopeConfusion, confusion_csv(all));
  write_text(dir / kGroups, gs.str());
  return {outputs, "doped " + std::to_string(doped.size() - base.doped_indices.size()) + " real samples; dataset size " +
                       std::to_string(out.size())};
}

CommandResult cmd_eval(const RunConfig& cfg, const std::optional<fs::path>& input, bool force) {
  cfg.validate();
  const fs::path dir = cfg.resolved_output_dir();
  const fs::path in = input.value_or(dir / kConcentrated);
  const std::string name = in.stem().string();
  const fs::path out = dir / ("metrics_" + name + ".csv");
  ensure_writable({out}, force);

  const ConcentratedDataset ds = load_dataset(in);
  const ToyDataset targets = target_set(cfg);
  const ToyDataset test = test_set(cfg);
  if (!(ds.shape == targets.shape) || ds.n_classes != targets.n_classes)
    throw ConfigError("dataset at " + in.string() + " does not match the configured target set");

  const Classifier teacher = train_teacher(targets, cfg);
  const Classifier student = train_student(teacher, ds.samples, cfg, derive_seed(cfg.seed, kTagEval));
  ClassifierConfig cc = cfg.classifier;
  cc.seed = derive_seed(cfg.seed, kTagEval);
  const Classifier hard = train_classifier(ds.samples, ds.labels, ds.n_classes, cc);

  double mmd_sum = 0.0;
  for (std::size_t c = 0; c < targets.n_classes; ++c) {
    const int cls = static_cast<int>(c);
    const Matrix t = targets.class_samples(cls);
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == cls) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.size() < 2) continue;
    mmd_sum += mmd2_unbiased(nn::gather_rows(ds.samples, rows), t, median_bandwidth(t, t));
  }
  const std::vector<int> t_labels = teacher_labels(teacher, targets);

  std::vector<std::pair<std::string, double>> metrics{
      {"size", static_cast<double>(ds.size())},
      {"n_synthetic", static_cast<double>(ds.n_synthetic)},
      {"n_doped", static_cast<double>(ds.doped_indices.size())},
      {"test_accuracy", evaluate(student, test.samples, test.labels)},
      {"test_accuracy_hard_labels", evaluate(hard, test.samples, test.labels)},
      {"teacher_test_accuracy", evaluate(teacher, test.samples, test.labels)},
      {"recognized", static_cast<double>(recognized_count(student, targets.samples, t_labels))},
      {"mmd2_sum_over_classes", mmd_sum},
  };
  std::ostringstream os;
  os << "metric,dataset,seed,value\n";
  for (const auto& [m, v] : metrics) os << m << ',' << name << ',' << cfg.seed << ',' << num(v) << '\n';
  write_text(out, os.str());
  return {{out}, "evaluated " + name + ": test accuracy " + num(metrics[3].second)};
}

CommandResult cmd_bias_demo(const RunConfig& cfg, bool force) {
  cfg.validate();
  const fs::path out = cfg.resolved_output_dir() / kBias;
  ensure_writable({out}, force);
  std::ostringstream os;
  os << "N,mc_mean,mc_std,analytic,ideal_prob\n";
  for (const auto& row : bias_table(cfg.bias_n_exp, cfg.bias_sizes, cfg.seed))
    os << row.n << ',' << num(row.mc.mean) << ',' << num(row.mc.std) << ',' << num(row.analytic) << ','
       << num(row.ideal) << '\n';
  write_text(out, os.str());
  return {{out}, "wrote occupancy table for " + std::to_string(cfg.bias_sizes.size()) + " sizes"};
}

}  // namespace dsco::pipeline
