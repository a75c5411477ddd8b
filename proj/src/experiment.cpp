#include "clarinet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "clarinet/error.hpp"
#include "clarinet/models.hpp"

namespace clarinet::experiment {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kComplementary = "source_complementary.csv";
constexpr const char* kHidden = "hidden_source_labels.csv";
constexpr const char* kTargetFeatures = "target_features.csv";
constexpr const char* kTargetLabels = "target_labels.csv";

// Published hyperparameters; anything else gets a note in the resolved config.
struct Published {
  const char* key;
  double value;
};
constexpr Published kPublished[] = {
    {"train.lr_classifier", 5e-5}, {"train.lr_adversarial", 0.005}, {"train.epochs", 500},
    {"train.batch_size", 128},     {"train.scatter_l", 0.5},        {"train.momentum", 0.9},
    {"train.weight_decay", 5e-5},
};

const char* kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::synthetic: return "synthetic";
    case TaskKind::idx: return "idx";
    case TaskKind::prepared: return "prepared";
  }
  return "?";
}

template <typename T>
void take(const json& obj, const char* key, T& out, const std::string& prefix, std::set<std::string>& seen) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ContractError("config: bad value for '" + prefix + key + "': " + e.what());
  }
  seen.insert(prefix + key);
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) {
      throw ContractError("config: unknown key '" + where + k + "'");
    }
  }
}

void parse_task(const json& t, TaskSpec& task, std::set<std::string>& seen) {
  if (!t.is_object()) throw ContractError("config: 'task' must be an object");
  std::string kind = "synthetic";
  take(t, "kind", kind, "task.", seen);
  if (kind == "synthetic") {
    task.kind = TaskKind::synthetic;
    reject_unknown(t, {"kind", "num_classes", "samples_per_domain", "radius", "spread", "rotation_deg", "translate_x",
                       "translate_y"},
                   "task.");
    auto& s = task.synthetic;
    take(t, "num_classes", s.num_classes, "task.", seen);
    take(t, "samples_per_domain", s.samples_per_domain, "task.", seen);
    take(t, "radius", s.radius, "task.", seen);
    take(t, "spread", s.spread, "task.", seen);
    take(t, "rotation_deg", s.rotation_deg, "task.", seen);
    take(t, "translate_x", s.translate_x, "task.", seen);
    take(t, "translate_y", s.translate_y, "task.", seen);
  } else if (kind == "idx") {
    task.kind = TaskKind::idx;
    reject_unknown(t, {"kind", "source_images", "source_labels", "target_images", "target_labels", "source_limit",
                       "target_limit", "side"},
                   "task.");
    auto& x = task.idx;
    std::string si, sl, ti, tl;
    take(t, "source_images", si, "task.", seen);
    take(t, "source_labels", sl, "task.", seen);
    take(t, "target_images", ti, "task.", seen);
    take(t, "target_labels", tl, "task.", seen);
    if (si.empty() || sl.empty() || ti.empty() || tl.empty()) {
      throw ContractError("config: idx task needs source_images, source_labels, target_images and target_labels");
    }
    x.source_images = si;
    x.source_labels = sl;
    x.target_images = ti;
    x.target_labels = tl;
    take(t, "source_limit", x.source_limit, "task.", seen);
    take(t, "target_limit", x.target_limit, "task.", seen);
    take(t, "side", x.side, "task.", seen);
  } else if (kind == "prepared") {
    task.kind = TaskKind::prepared;
    reject_unknown(t, {"kind", "dir"}, "task.");
    std::string dir;
    take(t, "dir", dir, "task.", seen);
    if (dir.empty()) throw ContractError("config: prepared task needs 'dir'");
    task.prepared_dir = dir;
  } else {
    throw ContractError("config: unknown task kind '" + kind + "' (expected synthetic, idx or prepared)");
  }
}

void parse_train(const json& t, train::TrainConfig& c, std::set<std::string>& seen) {
  if (!t.is_object()) throw ContractError("config: 'train' must be an object");
  reject_unknown(t, {"lr_classifier", "lr_adversarial", "epochs", "adversarial_start", "batch_size", "scatter_l",
                     "momentum", "weight_decay", "lambda_gamma", "prior_mode", "adversarial_sign",
                     "negative_correction", "record_wall_clock", "g_hidden", "d_hidden"},
                 "train.");
  const std::string p = "train.";
  take(t, "lr_classifier", c.lr_classifier, p, seen);
  take(t, "lr_adversarial", c.lr_adversarial, p, seen);
  take(t, "epochs", c.epochs, p, seen);
  take(t, "adversarial_start", c.adversarial_start, p, seen);
  take(t, "batch_size", c.batch_size, p, seen);
  take(t, "scatter_l", c.scatter_l, p, seen);
  take(t, "momentum", c.momentum, p, seen);
  take(t, "weight_decay", c.weight_decay, p, seen);
  take(t, "lambda_gamma", c.lambda_gamma, p, seen);
  take(t, "negative_correction", c.negative_correction, p, seen);
  take(t, "record_wall_clock", c.record_wall_clock, p, seen);
  take(t, "g_hidden", c.g_hidden, p, seen);
  take(t, "d_hidden", c.d_hidden, p, seen);
  std::string prior, sign;
  take(t, "prior_mode", prior, p, seen);
  if (prior == "batch") c.prior_mode = train::PriorMode::batch;
  else if (prior == "dataset") c.prior_mode = train::PriorMode::dataset;
  else if (!prior.empty()) throw ContractError("config: prior_mode must be 'batch' or 'dataset'");
  take(t, "adversarial_sign", sign, p, seen);
  if (sign == "likelihood") c.adversarial_sign = train::AdversarialSign::likelihood;
  else if (sign == "as_written") c.adversarial_sign = train::AdversarialSign::as_written;
  else if (!sign.empty()) throw ContractError("config: adversarial_sign must be 'likelihood' or 'as_written'");
}

json config_to_json(const ExperimentConfig& c) {
  json task;
  task["kind"] = kind_name(c.task.kind);
  switch (c.task.kind) {
    case TaskKind::synthetic: {
      const auto& s = c.task.synthetic;
      task["num_classes"] = s.num_classes;
      task["samples_per_domain"] = s.samples_per_domain;
      task["radius"] = s.radius;
      task["spread"] = s.spread;
      task["rotation_deg"] = s.rotation_deg;
      task["translate_x"] = s.translate_x;
      task["translate_y"] = s.translate_y;
      break;
    }
    case TaskKind::idx: {
      const auto& x = c.task.idx;
      task["source_images"] = x.source_images.string();
      task["source_labels"] = x.source_labels.string();
      task["target_images"] = x.target_images.string();
      task["target_labels"] = x.target_labels.string();
      task["source_limit"] = x.source_limit;
      task["target_limit"] = x.target_limit;
      task["side"] = x.side;
      break;
    }
    case TaskKind::prepared: task["dir"] = c.task.prepared_dir.string(); break;
  }
  const auto& t = c.train;
  json tr = {{"lr_classifier", t.lr_classifier},
             {"lr_adversarial", t.lr_adversarial},
             {"epochs", t.epochs},
             {"adversarial_start", t.adversarial_start},
             {"batch_size", t.batch_size},
             {"scatter_l", t.scatter_l},
             {"momentum", t.momentum},
             {"weight_decay", t.weight_decay},
             {"lambda_gamma", t.lambda_gamma},
             {"prior_mode", t.prior_mode == train::PriorMode::batch ? "batch" : "dataset"},
             {"adversarial_sign", t.adversarial_sign == train::AdversarialSign::likelihood ? "likelihood" : "as_written"},
             {"negative_correction", t.negative_correction},
             {"record_wall_clock", t.record_wall_clock},
             {"g_hidden", t.g_hidden},
             {"d_hidden", t.d_hidden}};
  json j;
  j["task"] = task;
  j["variant"] = std::string(train::to_string(t.variant));
  j["train"] = tr;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();

  json notes = json::object();
  for (const auto& p : kPublished) {
    const std::string key = p.key;
    const double v = tr.at(key.substr(6)).get<double>();
    if (v == p.value) continue;
    std::ostringstream s;
    s << (c.explicit_keys.count(key) ? "deviates from the published value " : "desk-scale default; published value ")
      << p.value;
    notes[key] = s.str();
  }
  if (!c.explicit_keys.count("train.adversarial_start")) {
    notes["train.adversarial_start"] = "desk-scale default; no published value";
  }
  if (t.adversarial_sign == train::AdversarialSign::likelihood) {
    notes["train.adversarial_sign"] = "discriminator climbs the domain log-likelihood (see README)";
  }
  j["notes"] = notes;
  return j;
}

json read_json(const fs::path& path) {
  auto in = data::open_read(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw FormatError(path.string() + ": write failed");
}

data::LabeledDataset random_subset(const data::LabeledDataset& ds, std::size_t limit, std::mt19937_64& rng) {
  if (limit == 0 || limit >= ds.size()) return ds;
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  data::LabeledDataset out;
  out.features = ds.features.gather_rows(idx);
  for (auto i : idx) out.labels.push_back(ds.labels[i]);
  out.num_classes = ds.num_classes;
  out.name = ds.name;
  return out;
}

data::LabeledDataset to_side(const data::LabeledDataset& ds, std::size_t side) {
  if (side == 0) return ds;
  const auto native = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(ds.dim()))));
  if (native * native != ds.dim()) {
    throw FormatError(ds.name + ": images are not square (" + std::to_string(ds.dim()) + " pixels)");
  }
  if (native == side) return ds;
  return data::resample_nearest(ds, native, native, side, side);
}

std::pair<data::LabeledDataset, data::LabeledDataset> labeled_pair(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.task.kind == TaskKind::synthetic) {
    auto s = c.task.synthetic;
    s.seed = seed;
    return data::make_synthetic_pair(s);
  }
  const auto& x = c.task.idx;
  auto src = data::load_idx(x.source_images, x.source_labels);
  auto tgt = data::load_idx(x.target_images, x.target_labels);
  src.name = "source";
  tgt.name = "target";
  std::seed_seq seq{seed, std::uint64_t{5}};
  std::mt19937_64 rng(seq);
  src = to_side(random_subset(src, x.source_limit, rng), x.side);
  tgt = to_side(random_subset(tgt, x.target_limit, rng), x.side);
  if (src.dim() != tgt.dim()) {
    throw ContractError("idx task: source has " + std::to_string(src.dim()) + " pixels, target " +
                        std::to_string(tgt.dim()) + "; set task.side");
  }
  const int K = std::max(src.num_classes, tgt.num_classes);
  src.num_classes = tgt.num_classes = K;
  return {std::move(src), std::move(tgt)};
}

complabel::ComplementaryDataset complement(const data::LabeledDataset& src, std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{7}};
  std::mt19937_64 rng(seq);
  return complabel::generate_complementary(src, rng);
}

}  // namespace

RunError::RunError(std::uint64_t s, const std::string& what)
    : std::runtime_error("seed " + std::to_string(s) + ": " + what), seed(s) {}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ContractError("config: seed list is empty");
  if (output_dir.empty()) throw ContractError("config: output directory is empty");
  auto t = train;
  if (t.num_classes == 0) t.num_classes = 2;  // filled in from the data later
  t.validate();
  if (task.kind == TaskKind::synthetic) task.synthetic.validate();
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ContractError("config: top level must be an object");
  // "notes" and "run_seed" appear in emitted configs, so those parse back.
  reject_unknown(j, {"task", "variant", "train", "seeds", "output_dir", "notes", "run_seed"}, "");
  ExperimentConfig c;
  auto& seen = c.explicit_keys;
  if (j.contains("task")) parse_task(j.at("task"), c.task, seen);
  if (j.contains("train")) parse_train(j.at("train"), c.train, seen);
  std::string variant;
  take(j, "variant", variant, "", seen);
  if (!variant.empty()) c.train.variant = train::parse_variant(variant);
  take(j, "seeds", c.seeds, "", seen);
  if (j.contains("run_seed")) {
    c.seeds = {j.at("run_seed").get<std::uint64_t>()};
    seen.insert("seeds");
  }
  std::string out;
  take(j, "output_dir", out, "", seen);
  if (!out.empty()) c.output_dir = out;
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ContractError& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

std::string resolved_config_json(const ExperimentConfig& config, int indent) {
  return config_to_json(config).dump(indent);
}

SeedData load_seed_data(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.task.kind != TaskKind::prepared) {
    auto [src, tgt] = labeled_pair(c, seed);
    return SeedData{complement(src, seed), data::strip_labels(tgt), std::move(tgt)};
  }
  const auto& dir = c.task.prepared_dir;
  const json m = read_json(dir / kManifest);
  const int K = m.at("num_classes").get<int>();
  const auto files = m.at("files");
  auto comp = data::read_csv(dir / files.at("complementary").get<std::string>(), K);
  complabel::ComplementaryDataset source(std::move(comp.features), std::move(comp.labels), K, "source");
  data::UnlabeledDataset target{data::read_features_csv(dir / files.at("target_features").get<std::string>()),
                                "target"};
  std::optional<data::LabeledDataset> eval;
  if (files.contains("target_labels")) {
    const auto path = dir / files.at("target_labels").get<std::string>();
    if (fs::exists(path)) {
      data::LabeledDataset ds{target.features, data::read_labels_csv(path), K, "target"};
      ds.validate();
      eval = std::move(ds);
    }
  }
  return SeedData{std::move(source), std::move(target), std::move(eval)};
}

PrepareOutcome prepare(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out) {
  if (c.task.kind == TaskKind::prepared) throw ContractError("prepare: task is already prepared");
  auto [src, tgt] = labeled_pair(c, seed);
  const auto comp = complement(src, seed);
  fs::create_directories(out);

  PrepareOutcome r;
  r.num_classes = comp.num_classes();
  r.manifest = out / kManifest;
  r.complementary = out / kComplementary;
  r.hidden_labels = out / kHidden;
  r.target_features = out / kTargetFeatures;
  r.target_labels = out / kTargetLabels;

  data::LabeledDataset comp_view{comp.features(), {comp.comp_labels().begin(), comp.comp_labels().end()},
                                 comp.num_classes(), "source_complementary"};
  data::write_csv(comp_view, r.complementary);
  data::write_labels_csv(src.labels, r.hidden_labels);
  data::write_features_csv(tgt.features, r.target_features);
  data::write_labels_csv(tgt.labels, r.target_labels);

  json m;
  m["num_classes"] = r.num_classes;
  m["seed"] = seed;
  m["source_samples"] = comp.size();
  m["target_samples"] = tgt.size();
  m["feature_dim"] = comp.dim();
  m["label_base"] = 1;
  m["files"] = {{"complementary", kComplementary},
                {"target_features", kTargetFeatures},
                {"target_labels", kTargetLabels}};
  m["hidden_label_file"] = kHidden;
  m["evaluation_only"] = {kHidden, kTargetLabels};
  m["config"] = config_to_json(c);
  write_text(r.manifest, m.dump(2) + "\n");
  return r;
}

std::string metrics_csv(const std::vector<train::MetricsRecord>& metrics, const std::string& config_json) {
  std::string s = "# config: " + config_json + "\n" + train::metrics_csv_header() + "\n";
  for (const auto& r : metrics) s += train::metrics_csv_row(r) + "\n";
  return s;
}

ExperimentOutcome run(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const auto variant = config.train.variant;
  const fs::path root = config.output_dir / std::string(train::to_string(variant));
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw ContractError("output directory " + root.string() + " is not writable: " + ec.message());

  const json resolved = config_to_json(config);
  ExperimentOutcome outcome;
  for (const auto seed : config.seeds) {
    SeedOutcome so;
    so.seed = seed;
    try {
      auto sd = load_seed_data(config, seed);
      auto tc = config.train;
      tc.seed = seed;
      tc.num_classes = sd.source.num_classes();
      if (config.task.kind == TaskKind::idx && config.task.idx.side != 0) {
        log << "seed " << seed << ": images resampled (nearest neighbour) to " << config.task.idx.side << "x"
            << config.task.idx.side << " where their native size differs\n";
      }
      if (variant == train::Variant::gac) {
        log << "seed " << seed << ": variant gac trains on the complementary-label source only; target data ("
            << sd.target.size() << " samples) ignored\n";
      }
      log << "seed " << seed << ": training " << train::to_string(variant) << " for " << tc.epochs << " epochs on "
          << sd.source.size() << " source / " << sd.target.size() << " target samples\n";
      const auto* eval = sd.target_eval ? &*sd.target_eval : nullptr;
      const auto result = train::run_variant(sd.source, sd.target, tc, eval);

      json run_cfg = resolved;
      run_cfg["run_seed"] = seed;
      const std::string cfg_line = run_cfg.dump();
      const fs::path dir = root / ("seed_" + std::to_string(seed));
      fs::create_directories(dir);
      so.metrics_csv = dir / "metrics.csv";
      so.summary_json = dir / "summary.json";
      so.checkpoint = dir / "model.ckpt";
      write_text(so.metrics_csv, metrics_csv(result.metrics, cfg_line));
      models::save_checkpoint(result.model, so.checkpoint, cfg_line);

      for (const auto& m : result.metrics) so.ascent_steps += m.ascent_steps;
      if (!result.metrics.empty()) so.final_target_acc = result.metrics.back().target_acc;
      so.pseudo_label_noise = result.pseudo_label_noise;
      json summary;
      summary["config"] = run_cfg;
      summary["seed"] = seed;
      summary["variant"] = std::string(train::to_string(variant));
      summary["epochs"] = result.metrics.size();
      summary["ascent_steps"] = so.ascent_steps;
      summary["final_target_acc"] = so.final_target_acc ? json(*so.final_target_acc) : json(nullptr);
      if (so.pseudo_label_noise) summary["pseudo_label_noise"] = *so.pseudo_label_noise;
      write_text(so.summary_json, summary.dump(2) + "\n");
      log << "seed " << seed << ": final target accuracy "
          << (so.final_target_acc ? std::to_string(*so.final_target_acc) : std::string("n/a")) << "\n";
    } catch (const std::exception& e) {
      throw RunError(seed, e.what());
    }
    outcome.seeds.push_back(so);
  }

  std::vector<double> accs;
  for (const auto& s : outcome.seeds) {
    if (s.final_target_acc) accs.push_back(*s.final_target_acc);
  }
  json agg;
  agg["config"] = resolved;
  agg["variant"] = std::string(train::to_string(variant));
  agg["seeds"] = config.seeds;
  agg["final_target_acc"] = accs;
  if (!accs.empty() && accs.size() == outcome.seeds.size()) {
    const double n = static_cast<double>(accs.size());
    const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : accs) ss += (a - mean) * (a - mean);
    outcome.mean_target_acc = mean;
    outcome.std_target_acc = accs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    agg["mean_target_acc"] = mean;
    agg["std_target_acc"] = *outcome.std_target_acc;
  } else {
    agg["mean_target_acc"] = nullptr;
    agg["std_target_acc"] = nullptr;
  }
  outcome.aggregate_json = root / "aggregate.json";
  write_text(outcome.aggregate_json, agg.dump(2) + "\n");
  return outcome;
}

}  // namespace clarinet::experiment
