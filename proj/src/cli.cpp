#include "clarinet/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "clarinet/autodiff.hpp"
#include "clarinet/error.hpp"
#include "clarinet/experiment.hpp"
#include "clarinet/kernels.hpp"
#include "clarinet/models.hpp"
#include "clarinet/train.hpp"
#include "clarinet/verify.hpp"

namespace clarinet::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string variant;
  std::string out;
  std::optional<double> l;
  std::optional<int> ts, epochs;
  std::optional<std::size_t> batch;
  int threads = 1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON experiment config");
  app->add_option("--seed", c.seeds, "Seed (repeatable)");
  app->add_option("--variant", c.variant, "clarinet, gac, two-step, ablation-ce or ablation-no-t");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--l", c.l, "Scattering temperature l");
  app->add_option("--ts", c.ts, "First adversarial epoch is ts+1");
  app->add_option("--epochs", c.epochs, "Number of epochs");
  app->add_option("--batch", c.batch, "Minibatch size");
  app->add_option("--threads", c.threads, "OpenMP threads for dense kernels")->check(CLI::PositiveNumber);
}

// flags > config file > defaults
experiment::ExperimentConfig resolve(const Common& c) {
  experiment::ExperimentConfig cfg;
  if (!c.config.empty()) cfg = experiment::load_config(c.config);
  auto mark = [&](const char* key) { cfg.explicit_keys.insert(key); };
  if (!c.seeds.empty()) {
    cfg.seeds = c.seeds;
    mark("seeds");
  } else if (!cfg.explicit_keys.count("seeds")) {
    if (const char* env = std::getenv("CLARINET_SEED")) {
      try {
        cfg.seeds = {std::stoull(env)};
      } catch (const std::exception&) {
        throw ContractError(std::string("CLARINET_SEED is not a seed: '") + env + "'");
      }
      mark("seeds");
    }
  }
  if (!c.variant.empty()) {
    cfg.train.variant = train::parse_variant(c.variant);
    mark("variant");
  }
  if (!c.out.empty()) {
    cfg.output_dir = c.out;
    mark("output_dir");
  }
  if (c.l) {
    cfg.train.scatter_l = *c.l;
    mark("train.scatter_l");
  }
  if (c.ts) {
    cfg.train.adversarial_start = *c.ts;
    mark("train.adversarial_start");
  }
  if (c.epochs) {
    cfg.train.epochs = *c.epochs;
    mark("train.epochs");
  }
  if (c.batch) {
    cfg.train.batch_size = *c.batch;
    mark("train.batch_size");
  }
  kernels::set_num_threads(c.threads);
  cfg.validate();
  return cfg;
}

int cmd_prepare(const Common& c, std::ostream& out) {
  const auto cfg = resolve(c);
  const fs::path dir = c.out.empty() ? cfg.output_dir / "prepared" : fs::path(c.out);
  const auto r = experiment::prepare(cfg, cfg.seeds.front(), dir);
  out << "prepared K=" << r.num_classes << " seed " << cfg.seeds.front() << " into " << dir.string() << "\n"
      << "  " << r.complementary.string() << "\n"
      << "  " << r.target_features.string() << "\n"
      << "  " << r.hidden_labels.string() << " (evaluation only)\n"
      << "  " << r.target_labels.string() << " (evaluation only)\n"
      << "  " << r.manifest.string() << "\n";
  return kOk;
}

int cmd_train(const Common& c, std::ostream& out) {
  const auto cfg = resolve(c);
  const auto r = experiment::run(cfg, out);
  out << "aggregate: " << r.aggregate_json.string();
  if (r.mean_target_acc) out << "  mean " << *r.mean_target_acc << " +- " << *r.std_target_acc;
  out << "\n";
  return kOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& report_path,
               const std::string& fault, std::ostream& out) {
  if (fault == "scatter-map-gradient") {
    ad::fault::corrupt_scatter_map_gradient(true);
  } else if (!fault.empty()) {
    throw ContractError("unknown fault '" + fault + "'");
  }
  verify::Report rep;
  try {
    rep = verify::run_suite(suite, seed);
  } catch (...) {
    ad::fault::corrupt_scatter_map_gradient(false);
    throw;
  }
  ad::fault::corrupt_scatter_map_gradient(false);
  const auto text = rep.to_json();
  if (report_path.empty()) {
    out << text << "\n";
  } else {
    std::ofstream f(report_path);
    if (!f) throw FormatError(report_path + ": cannot open for writing");
    f << text << "\n";
    for (const auto& ch : rep.checks) {
      out << (ch.passed ? "PASS " : "FAIL ") << ch.name << " " << ch.metric << "=" << ch.value << " (threshold "
          << ch.threshold << ")\n";
    }
  }
  return rep.passed() ? kOk : kFailure;
}

int cmd_eval(const std::string& model, const std::string& data_csv, const std::string& features_csv,
             const std::string& predictions, std::ostream& out) {
  if (data_csv.empty() == features_csv.empty()) throw ContractError("eval: give exactly one of --data or --features");
  std::string meta;
  const auto net = models::load_checkpoint(model, &meta);
  std::optional<data::LabeledDataset> labeled;
  Tensor x;
  if (!data_csv.empty()) {
    labeled = data::read_csv(data_csv, net.num_classes());
    x = labeled->features;
  } else {
    x = data::read_features_csv(features_csv);
  }
  const auto pred = models::pseudo_label(net, x);
  nlohmann::json j;
  j["model"] = model;
  j["samples"] = pred.size();
  if (labeled) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labeled->labels[i];
    j["accuracy"] = static_cast<double>(hit) / static_cast<double>(pred.size());
  } else {
    j["accuracy"] = nullptr;
  }
  if (!predictions.empty()) {
    data::write_labels_csv(pred, predictions);
    j["predictions"] = predictions;
  }
  try {
    j["model_config"] = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception&) {
    j["model_config"] = meta;
  }
  out << j.dump(2) << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Complementary-label adversarial domain adaptation"};
  app.require_subcommand(1);

  Common prep_opts, train_opts;
  auto* prep = app.add_subcommand("prepare", "Write a complementary-label dataset and manifest");
  add_common(prep, prep_opts);
  auto* tr = app.add_subcommand("train", "Train one variant over the seed list");
  add_common(tr, train_opts);

  std::string suite = "all", report, fault;
  std::uint64_t vseed = 0;
  auto* ver = app.add_subcommand("verify", "Run verification suites");
  ver->add_option("suite,--suite", suite, "unbiasedness, gradcheck, tmap or all");
  ver->add_option("--seed", vseed, "Seed for the random cases");
  ver->add_option("--out", report, "Write the JSON report here instead of stdout");
  ver->add_option("--inject-fault", fault)->group("");

  std::string model, data_csv, features_csv, predictions;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a CSV dataset");
  ev->add_option("--model", model, "Checkpoint file")->required();
  ev->add_option("--data", data_csv, "CSV with features and 1-based label column");
  ev->add_option("--features", features_csv, "CSV with features only");
  ev->add_option("--out", predictions, "Write 1-based predicted labels here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (prep->parsed()) return cmd_prepare(prep_opts, out);
    if (tr->parsed()) return cmd_train(train_opts, out);
    if (ver->parsed()) return cmd_verify(suite, vseed, report, fault, out);
    if (ev->parsed()) return cmd_eval(model, data_csv, features_csv, predictions, out);
  } catch (const experiment::RunError& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace clarinet::cli
