#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "clarinet/tensor.hpp"

namespace clarinet::data {

/// Class labels are 0-based in memory and 1-based in every file the library
/// writes (CSV, manifests). IDX files keep their native 0-based digits.
struct LabeledDataset {
  Tensor features;  // n x d
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  /// Throws ContractError when sizes or label range are inconsistent.
  void validate() const;
};

/// Target-domain training view: features only.
struct UnlabeledDataset {
  Tensor features;
  std::string name;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

UnlabeledDataset strip_labels(const LabeledDataset& ds);

// --- IDX --------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image/label pair. Pixels are divided by 255; labels are kept
/// as class indices and K is max(label)+1. Throws FormatError on a bad magic
/// number, truncated payload, or image/label count mismatch.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes an IDX pair. Features are scaled by 255 and rounded; `rows * cols`
/// must equal the feature width.
void write_idx(const LabeledDataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels);

/// Nearest-neighbour resize of square-image features from (in_rows x in_cols)
/// to (out_rows x out_cols). Used to bring 16x16 digits up to 28x28.
LabeledDataset resample_nearest(const LabeledDataset& ds, std::size_t in_rows, std::size_t in_cols,
                                std::size_t out_rows, std::size_t out_cols);

/// First `n` samples (all when n >= size).
LabeledDataset head(const LabeledDataset& ds, std::size_t n);

// --- synthetic domain pairs -------------------------------------------------

struct SyntheticPairConfig {
  int num_classes = 4;
  std::size_t samples_per_domain = 2000;
  /// Cluster centres sit on a circle of this radius, class k at angle 2*pi*k/K.
  double radius = 1.0;
  /// Isotropic standard deviation of each cluster.
  double spread = 0.3;
  /// Target domain = source law rotated by this angle, then translated.
  double rotation_deg = 30.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Source and target samples with balanced classes (labels drawn uniformly).
/// Deterministic in `config.seed`; the two domains use independent streams.
std::pair<LabeledDataset, LabeledDataset> make_synthetic_pair(const SyntheticPairConfig& config);

/// An independent source-law sample (for held-out source evaluation).
LabeledDataset make_synthetic_source(const SyntheticPairConfig& config, std::uint64_t stream);

// --- CSV ----------------------------------------------------------------------

/// Header `x1,...,xd,label`; labels written 1-based.
void write_csv(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset read_csv(const std::filesystem::path& path, int num_classes = 0);
/// Features only (`x1,...,xd`).
void write_features_csv(const Tensor& features, const std::filesystem::path& path);
Tensor read_features_csv(const std::filesystem::path& path);
/// Single `label` column, 1-based.
void write_labels_csv(const std::vector<int>& labels, const std::filesystem::path& path);
std::vector<int> read_labels_csv(const std::filesystem::path& path);

// --- minibatching --------------------------------------------------------------

/// One epoch of minibatch index lists: a fresh permutation of [0, n) cut into
/// chunks of `batch_size`, keeping the last short chunk.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                     std::mt19937_64& rng);

/// Iterations per epoch when two streams advance together: the shorter bounds it.
std::size_t iterations_per_epoch(std::size_t n_source, std::size_t n_target, std::size_t batch_size);

// --- file access audit -------------------------------------------------------------

/// Opens `path` for reading and records it in the process-wide access log.
std::ifstream open_read(const std::filesystem::path& path, bool binary = false);
std::vector<std::filesystem::path> access_log();
void clear_access_log();

}  // namespace clarinet::data
