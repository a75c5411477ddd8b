#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "clarinet/complabel.hpp"
#include "clarinet/data.hpp"
#include "clarinet/train.hpp"

namespace clarinet::experiment {

enum class TaskKind { synthetic, idx, prepared };

struct IdxTask {
  std::filesystem::path source_images, source_labels, target_images, target_labels;
  /// Per-domain sample cap (0 = all). Subsets are drawn with the run seed.
  std::size_t source_limit = 0;
  std::size_t target_limit = 0;
  /// Side length both domains are resampled to (0 = keep native size).
  std::size_t side = 0;
};

struct TaskSpec {
  TaskKind kind = TaskKind::synthetic;
  data::SyntheticPairConfig synthetic;
  IdxTask idx;
  /// Directory written by prepare().
  std::filesystem::path prepared_dir;
};

struct ExperimentConfig {
  TaskSpec task;
  train::TrainConfig train;
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path output_dir = "runs";
  /// Dotted keys set by a config file or flag rather than left at defaults.
  std::set<std::string> explicit_keys;

  void validate() const;
};

/// Parses a JSON document. Unknown keys throw ContractError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field after defaults, plus a "notes" object marking values that
/// differ from the published hyperparameters.
std::string resolved_config_json(const ExperimentConfig& config, int indent = -1);

/// In-memory data for one seed.
struct SeedData {
  complabel::ComplementaryDataset source;
  data::UnlabeledDataset target;
  std::optional<data::LabeledDataset> target_eval;
};

/// Builds (or loads, for a prepared task) the data for `seed`. Never opens the
/// hidden-label file of a prepared directory.
SeedData load_seed_data(const ExperimentConfig& config, std::uint64_t seed);

struct PrepareOutcome {
  std::filesystem::path manifest;
  std::filesystem::path complementary;
  std::filesystem::path hidden_labels;
  std::filesystem::path target_features;
  std::filesystem::path target_labels;
  int num_classes = 0;
};

/// Writes source_complementary.csv, hidden_source_labels.csv (evaluation
/// only), target_features.csv, target_labels.csv and manifest.json into `out`.
PrepareOutcome prepare(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<double> final_target_acc;
  std::optional<double> pseudo_label_noise;
  std::size_t ascent_steps = 0;
  std::filesystem::path metrics_csv, summary_json, checkpoint;
};

struct ExperimentOutcome {
  std::vector<SeedOutcome> seeds;
  std::optional<double> mean_target_acc;
  std::optional<double> std_target_acc;  // sample standard deviation
  std::filesystem::path aggregate_json;
};

/// Metrics CSV: a `# config: {...}` line, then the header and one row per epoch.
std::string metrics_csv(const std::vector<train::MetricsRecord>& metrics, const std::string& config_json);

/// One training run per seed into <output_dir>/<variant>/seed_<n>/, then
/// <output_dir>/<variant>/aggregate.json. A failing seed aborts with a
/// RunError naming it; earlier seeds' files stay on disk.
ExperimentOutcome run(const ExperimentConfig& config, std::ostream& log);

struct RunError : std::runtime_error {
  RunError(std::uint64_t seed, const std::string& what);
  std::uint64_t seed;
};

}  // namespace clarinet::experiment
