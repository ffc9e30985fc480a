#pragma once

// Reproducible experiment plumbing behind the command-line tool.
//
// Directory layout under an experiment's output root:
//   data/train/seq_XXX/frame_YYY.vol + meta.json     all frames
//   data/test/seq_XXX/frame_000.vol, frame_<n-1>.vol  endpoints only
//   data/test_labels/seq_XXX/frame_YYY.vol            interior ground truth
//   model/checkpoint.bin, model/train_log.jsonl
//   results/metrics.csv, aggregate.json, adaptation.json, timing.json
// Every command also writes the resolved config.json next to its outputs.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttvi/nets.hpp"
#include "ttvi/synth.hpp"
#include "ttvi/training.hpp"
#include "ttvi/ttt.hpp"

namespace ttvi {

struct DataConfig {
  std::size_t n_train = 90;
  std::size_t n_test = 10;
  synth::SequenceSpec sequence;             // seed is overridden per sequence
  std::vector<synth::ShiftSpec> test_shifts;  // seeds are overridden per sequence
};

struct EvalConfig {
  std::vector<Scheme> schemes{kAllSchemes.begin(), kAllSchemes.end()};
  std::vector<Task> tasks{kAllTasks.begin(), kAllTasks.end()};
  bool include_no_ttt = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  DataConfig data;
  ArchConfig arch;
  TrainConfig train;
  TTTConfig ttt;  // scheme and task are taken from the evaluation grid
  EvalConfig eval;

  void validate() const;  // throws ContractError / DomainError
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);  // missing keys keep their defaults
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

struct ExperimentPaths {
  std::filesystem::path data, model, results;
  static ExperimentPaths under(const std::filesystem::path& root);
};

/// Fails with ContractError when `dir` exists and is non-empty, unless `force`
/// (then its contents are removed).
void prepare_output_dir(const std::filesystem::path& dir, bool force);

/// Spec of train (split 0) or test (split 1) sequence `index`.
synth::SequenceSpec sequence_spec(const ExperimentConfig& cfg, int split, std::size_t index);
std::string sequence_id(std::size_t index);

void cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& data_dir, bool force);

std::vector<TrainSequence> load_train_set(const std::filesystem::path& data_dir);

/// Test inputs (endpoints only) and the prediction times of each item. Never
/// touches the label sidecar directory.
struct TestSet {
  std::vector<TestItem> items;
  std::vector<std::vector<double>> times;
};
TestSet load_test_inputs(const std::filesystem::path& data_dir);
std::vector<Tensor<float>> load_test_labels(const std::filesystem::path& data_dir, const ItemPrediction& item);

/// Trains from init_params(arch, seed) and writes checkpoint.bin and
/// train_log.jsonl (one line per epoch).
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& model_dir, bool force);

struct CellSpec {
  bool adapt = true;
  Scheme scheme = Scheme::minibatch;
  Task task = Task::rotation;
  std::string scheme_label() const { return adapt ? scheme_name(scheme) : "none"; }
  std::string task_label() const { return adapt ? task_name(task) : "none"; }
};

std::vector<CellSpec> evaluation_grid(const EvalConfig& eval);

/// Runs every grid cell, writes adaptation.json and timing.json, then scores
/// against the label sidecar and writes metrics.csv and aggregate.json.
/// Returns true if any cell fell back to theta_0 after a non-finite loss.
bool cmd_adapt_eval(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                    const std::filesystem::path& checkpoint, const std::filesystem::path& results_dir, bool force);

inline constexpr const char* kLinearBlend = "linear-blend";

struct ReportRow {
  std::string scheme, task, metric;
  double mean = 0.0, std = 0.0;  // across runs of each run's mean
  std::size_t runs = 0;
};

/// Aggregates metrics.csv of one or more result directories. Writes the table
/// to `table` and, when `csv_out` is non-empty, a plot-ready CSV.
std::vector<ReportRow> cmd_report(const std::vector<std::filesystem::path>& result_dirs, std::ostream& table,
                                  const std::filesystem::path& csv_out = {});

/// Shortest round-trip decimal form used in every CSV.
std::string format_double(double v);

}  // namespace ttvi
