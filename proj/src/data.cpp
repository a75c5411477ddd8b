#include "clarinet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>

#include "clarinet/error.hpp"

namespace clarinet::data {

namespace {

std::mutex g_log_mutex;
std::vector<std::filesystem::path> g_log;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError(path.string() + ": truncated header (" + what + ")");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::string hex(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::ofstream open_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.precision(17);
  return out;
}

}  // namespace

void LabeledDataset::validate() const {
  if (labels.empty()) throw ContractError("dataset '" + name + "': no samples");
  if (num_classes < 2) throw ContractError("dataset '" + name + "': K must be >= 2");
  if (features.rows() != labels.size()) {
    throw ContractError("dataset '" + name + "': " + std::to_string(features.rows()) + " feature rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ContractError("dataset '" + name + "': label out of range");
  }
}

UnlabeledDataset strip_labels(const LabeledDataset& ds) { return {ds.features, ds.name}; }

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  auto img = open_read(images, true);
  auto lab = open_read(labels, true);

  const auto img_magic = read_be32(img, images, "magic");
  if (img_magic != kIdxImagesMagic) {
    throw FormatError(images.string() + ": bad IDX image magic " + hex(img_magic) + " (expected " +
                      hex(kIdxImagesMagic) + ")");
  }
  const auto n_img = read_be32(img, images, "count");
  const auto rows = read_be32(img, images, "rows");
  const auto cols = read_be32(img, images, "cols");

  const auto lab_magic = read_be32(lab, labels, "magic");
  if (lab_magic != kIdxLabelsMagic) {
    throw FormatError(labels.string() + ": bad IDX label magic " + hex(lab_magic) + " (expected " +
                      hex(kIdxLabelsMagic) + ")");
  }
  const auto n_lab = read_be32(lab, labels, "count");
  if (n_img != n_lab) {
    throw FormatError("IDX count mismatch: " + std::to_string(n_img) + " images vs " + std::to_string(n_lab) +
                      " labels");
  }
  if (n_img == 0 || rows == 0 || cols == 0) throw FormatError(images.string() + ": empty IDX payload");

  const std::size_t d = std::size_t{rows} * cols;
  std::vector<unsigned char> pix(std::size_t{n_img} * d);
  if (!img.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size()))) {
    throw FormatError(images.string() + ": truncated image payload");
  }
  std::vector<unsigned char> raw(n_lab);
  if (!lab.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError(labels.string() + ": truncated label payload");
  }

  LabeledDataset ds;
  std::vector<double> f(pix.size());
  std::transform(pix.begin(), pix.end(), f.begin(), [](unsigned char v) { return v / 255.0; });
  ds.features = Tensor::matrix(n_img, d, std::move(f));
  ds.labels.assign(raw.begin(), raw.end());
  ds.num_classes = std::max(2, *std::max_element(ds.labels.begin(), ds.labels.end()) + 1);
  ds.name = images.stem().string();
  return ds;
}

void write_idx(const LabeledDataset& ds, std::size_t rows, std::size_t cols, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  if (rows * cols != ds.dim()) throw ContractError("write_idx: rows*cols does not match feature width");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw std::runtime_error("write_idx: cannot open output files");
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : ds.features.values()) {
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(y));
}

LabeledDataset resample_nearest(const LabeledDataset& ds, std::size_t in_rows, std::size_t in_cols,
                                std::size_t out_rows, std::size_t out_cols) {
  if (in_rows * in_cols != ds.dim()) throw ContractError("resample_nearest: input geometry does not match width");
  LabeledDataset out = ds;
  std::vector<double> f(ds.size() * out_rows * out_cols);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto src = ds.features.row_span(n);
    double* dst = f.data() + n * out_rows * out_cols;
    for (std::size_t r = 0; r < out_rows; ++r) {
      const std::size_t sr = std::min(in_rows - 1, r * in_rows / out_rows);
      for (std::size_t c = 0; c < out_cols; ++c) {
        const std::size_t sc = std::min(in_cols - 1, c * in_cols / out_cols);
        dst[r * out_cols + c] = src[sr * in_cols + sc];
      }
    }
  }
  out.features = Tensor::matrix(ds.size(), out_rows * out_cols, std::move(f));
  return out;
}

LabeledDataset head(const LabeledDataset& ds, std::size_t n) {
  if (n >= ds.size()) return ds;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return {ds.features.gather_rows(idx), {ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n)},
          ds.num_classes, ds.name};
}

void SyntheticPairConfig::validate() const {
  if (num_classes < 2) throw ContractError("synthetic: K must be >= 2");
  if (!(spread > 0.0)) throw ContractError("synthetic: spread must be > 0");
  if (samples_per_domain == 0) throw ContractError("synthetic: samples_per_domain must be >= 1");
}

namespace {

LabeledDataset sample_domain(const SyntheticPairConfig& c, std::mt19937_64& rng, double angle_rad, double tx,
                             double ty, std::string name) {
  std::uniform_int_distribution<int> cls(0, c.num_classes - 1);
  std::normal_distribution<double> noise(0.0, c.spread);
  const double cr = std::cos(angle_rad);
  const double sr = std::sin(angle_rad);
  LabeledDataset ds;
  ds.num_classes = c.num_classes;
  ds.name = std::move(name);
  std::vector<double> f(c.samples_per_domain * 2);
  ds.labels.resize(c.samples_per_domain);
  for (std::size_t i = 0; i < c.samples_per_domain; ++i) {
    const int y = cls(rng);
    const double theta = 2.0 * std::numbers::pi * y / c.num_classes;
    const double x0 = c.radius * std::cos(theta) + noise(rng);
    const double x1 = c.radius * std::sin(theta) + noise(rng);
    f[2 * i] = cr * x0 - sr * x1 + tx;
    f[2 * i + 1] = sr * x0 + cr * x1 + ty;
    ds.labels[i] = y;
  }
  ds.features = Tensor::matrix(c.samples_per_domain, 2, std::move(f));
  return ds;
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> make_synthetic_pair(const SyntheticPairConfig& config) {
  config.validate();
  std::seed_seq src_seq{config.seed, std::uint64_t{1}};
  std::seed_seq tgt_seq{config.seed, std::uint64_t{2}};
  std::mt19937_64 src_rng(src_seq);
  std::mt19937_64 tgt_rng(tgt_seq);
  const double angle = config.rotation_deg * std::numbers::pi / 180.0;
  return {sample_domain(config, src_rng, 0.0, 0.0, 0.0, "synthetic-source"),
          sample_domain(config, tgt_rng, angle, config.translate_x, config.translate_y, "synthetic-target")};
}

LabeledDataset make_synthetic_source(const SyntheticPairConfig& config, std::uint64_t stream) {
  config.validate();
  std::seed_seq seq{config.seed, std::uint64_t{3}, stream};
  std::mt19937_64 rng(seq);
  return sample_domain(config, rng, 0.0, 0.0, 0.0, "synthetic-source-heldout");
}

void write_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  auto out = open_write(path);
  for (std::size_t j = 0; j < ds.dim(); ++j) out << "x" << (j + 1) << ",";
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features.row_span(i)) out << v << ",";
    out << (ds.labels[i] + 1) << "\n";
  }
}

LabeledDataset read_csv(const std::filesystem::path& path, int num_classes) {
  auto in = open_read(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
  const auto header = split_csv(line);
  if (header.size() < 2 || header.back() != "label") throw FormatError(path.string() + ": last column must be 'label'");
  const std::size_t d = header.size() - 1;
  std::vector<double> f;
  LabeledDataset ds;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != d + 1) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    try {
      for (std::size_t j = 0; j < d; ++j) f.push_back(std::stod(cells[j]));
      ds.labels.push_back(std::stoi(cells[d]) - 1);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": unparsable value");
    }
  }
  if (ds.labels.empty()) throw FormatError(path.string() + ": no rows");
  ds.features = Tensor::matrix(ds.labels.size(), d, std::move(f));
  ds.num_classes = num_classes > 0 ? num_classes : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.name = path.stem().string();
  ds.validate();
  return ds;
}

void write_features_csv(const Tensor& features, const std::filesystem::path& path) {
  auto out = open_write(path);
  for (std::size_t j = 0; j < features.cols(); ++j) out << (j ? "," : "") << "x" << (j + 1);
  out << "\n";
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto r = features.row_span(i);
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
    out << "\n";
  }
}

Tensor read_features_csv(const std::filesystem::path& path) {
  auto in = open_read(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
  const std::size_t d = split_csv(line).size();
  std::vector<double> f;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != d) throw FormatError(path.string() + ": wrong column count");
    try {
      for (const auto& c : cells) f.push_back(std::stod(c));
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": unparsable value");
    }
    ++n;
  }
  if (n == 0) throw FormatError(path.string() + ": no rows");
  return Tensor::matrix(n, d, std::move(f));
}

void write_labels_csv(const std::vector<int>& labels, const std::filesystem::path& path) {
  auto out = open_write(path);
  out << "label\n";
  for (int y : labels) out << (y + 1) << "\n";
}

std::vector<int> read_labels_csv(const std::filesystem::path& path) {
  auto in = open_read(path);
  std::string line;
  if (!std::getline(in, line) || line != "label") throw FormatError(path.string() + ": expected 'label' header");
  std::vector<int> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(std::stoi(line) - 1);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": unparsable label");
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size == 0) throw ContractError("epoch_batches: batch size must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
  }
  return out;
}

std::size_t iterations_per_epoch(std::size_t n_source, std::size_t n_target, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("iterations_per_epoch: batch size must be >= 1");
  const auto n = std::min(n_source, n_target);
  return (n + batch_size - 1) / batch_size;
}

std::ifstream open_read(const std::filesystem::path& path, bool binary) {
  {
    std::lock_guard lock(g_log_mutex);
    g_log.push_back(path);
  }
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return in;
}

std::vector<std::filesystem::path> access_log() {
  std::lock_guard lock(g_log_mutex);
  return g_log;
}

void clear_access_log() {
  std::lock_guard lock(g_log_mutex);
  g_log.clear();
}

}  // namespace clarinet::data
