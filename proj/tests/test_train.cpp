#include <doctest.h>

#include <cmath>
#include <random>

#include "clarinet/error.hpp"
#include "clarinet/kernels.hpp"
#include "clarinet/losses.hpp"
#include "clarinet/train.hpp"

using namespace clarinet;
using namespace clarinet::train;

namespace {

struct Fixture {
  data::LabeledDataset source_true, target_true;
  complabel::ComplementaryDataset source;
  data::UnlabeledDataset target;
};

Fixture make_fixture(std::size_t n = 200, std::uint64_t seed = 0) {
  data::SyntheticPairConfig sc;
  sc.samples_per_domain = n;
  sc.spread = 0.2;
  sc.seed = seed;
  auto [s, t] = data::make_synthetic_pair(sc);
  std::mt19937_64 rng(seed + 7);
  auto comp = complabel::generate_complementary(s, rng);
  auto target = data::strip_labels(t);
  return {std::move(s), std::move(t), std::move(comp), std::move(target)};
}

TrainConfig small_config() {
  TrainConfig c;
  c.num_classes = 4;
  c.epochs = 4;
  c.adversarial_start = 2;
  c.batch_size = 64;
  c.lr_classifier = 2e-3;
  c.lr_adversarial = 2e-3;
  c.g_hidden = {16, 8};
  c.d_hidden = {8};
  c.record_wall_clock = false;
  return c;
}

std::vector<Tensor> snapshot(std::vector<ad::Parameter*> ps) {
  std::vector<Tensor> out;
  for (auto* p : ps) out.push_back(p->value);
  return out;
}

std::vector<Tensor> snapshot(const models::NetworkTriplet& net, bool discriminator) {
  auto& n = const_cast<models::NetworkTriplet&>(net);
  return snapshot(discriminator ? n.discriminator_parameters() : n.classifier_parameters());
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("sgd step examples") {
    ad::Parameter p("p", Tensor::scalar(1.0));
    Tensor v = Tensor::scalar(0.0);
    sgd_step(p, Tensor::scalar(0.5), v, 1.0, 0.0, 0.0);
    CHECK(p.value.item() == 0.5);

    ad::Parameter q("q", Tensor::scalar(2.0));
    Tensor vq = Tensor::scalar(0.0);
    sgd_step(q, Tensor::scalar(0.0), vq, 0.1, 0.0, 5e-5);
    CHECK(q.value.item() == doctest::Approx(2.0 * (1 - 0.1 * 5e-5)).epsilon(1e-15));

    const double g = 0.3;
    ad::Parameter r("r", Tensor::scalar(0.0));
    Tensor vr = Tensor::scalar(0.0);
    sgd_step(r, Tensor::scalar(g), vr, 1.0, 0.9, 0.0);
    CHECK(r.value.item() == doctest::Approx(-g));
    sgd_step(r, Tensor::scalar(g), vr, 1.0, 0.9, 0.0);
    CHECK(r.value.item() == doctest::Approx(-(g + 1.9 * g)));

    Tensor bad = Tensor::row({0, 0});
    CHECK_THROWS_AS(sgd_step(r, Tensor::scalar(g), bad, 1.0, 0.9, 0.0), ContractError);
  }

  TEST_CASE("Sgd with sign -1 ascends") {
    ad::Parameter p("p", Tensor::scalar(1.0));
    p.grad = Tensor::scalar(0.5);
    Sgd opt({&p}, 0.1, 0.0, 0.0);
    opt.step(-1.0);
    CHECK(p.value.item() == doctest::Approx(1.05));
  }

  TEST_CASE("lambda schedule") {
    CHECK(lambda_schedule(0.0) == 0.0);
    CHECK(lambda_schedule(1.0) == doctest::Approx(0.99991).epsilon(1e-5));
    CHECK(lambda_schedule(0.5) == doctest::Approx(0.98661).epsilon(1e-5));
    CHECK(lambda_schedule(1.5) == lambda_schedule(1.0));
    CHECK(lambda_schedule(-0.2) == 0.0);
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
      const double l = lambda_schedule(i / 100.0);
      CHECK(l >= prev);
      prev = l;
    }
  }

  TEST_CASE("variant names round-trip") {
    for (auto v : {Variant::clarinet, Variant::gac, Variant::two_step, Variant::ablation_ce, Variant::ablation_no_t})
      CHECK(parse_variant(to_string(v)) == v);
    CHECK_THROWS_AS(parse_variant("dann"), ContractError);
  }

  TEST_CASE("config and K mismatch") {
    auto fx = make_fixture(40);
    auto c = small_config();
    c.num_classes = 3;
    CHECK_THROWS_AS(train_clarinet(fx.source, fx.target, c), ContractError);
    c = small_config();
    c.epochs = 0;
    CHECK_THROWS_AS(train_gac(fx.source, c), ContractError);
  }

  TEST_CASE("metrics: one record per epoch, adversarial loss gated") {
    auto fx = make_fixture();
    auto c = small_config();
    c.epochs = 3;
    c.adversarial_start = 1;
    const auto r = train_clarinet(fx.source, fx.target, c, &fx.target_true);
    REQUIRE(r.metrics.size() == 3);
    CHECK_FALSE(r.metrics[0].adv_loss.has_value());
    CHECK(r.metrics[0].lambda == 0.0);
    CHECK(r.metrics[1].adv_loss.has_value());
    CHECK(r.metrics[2].adv_loss.has_value());
    for (const auto& m : r.metrics) {
      CHECK(m.target_acc.has_value());
      CHECK(m.seconds == 0.0);
      CHECK(m.iterations == 4);
    }
    CHECK(metrics_csv_header() == "epoch,comp_loss,l_neg,ascent_steps,adv_loss,lambda,target_acc,seconds");
    const auto row = metrics_csv_row(r.metrics[0]);
    CHECK(row.substr(0, 2) == "1,");
    CHECK(row.find(",,") != std::string::npos);
  }

  TEST_CASE("discriminator is untouched through the adversarial start epoch") {
    auto fx = make_fixture();
    auto c = small_config();
    c.epochs = 5;
    c.adversarial_start = 3;
    std::vector<Tensor> initial;
    int checked_epochs = 0;
    bool changed_after = false;
    int last_epoch = 0;
    Observer obs;
    obs.before_classifier_step = [&](const ClassifierStep& s, const models::NetworkTriplet& net) {
      if (initial.empty()) initial = snapshot(net, true);
      if (s.epoch != last_epoch) {
        last_epoch = s.epoch;
        if (s.epoch <= c.adversarial_start + 1) {
          CHECK(snapshot(net, true) == initial);
          ++checked_epochs;
        }
      }
    };
    obs.after_classifier_step = [&](const ClassifierStep& s, const models::NetworkTriplet& net) {
      if (s.epoch <= c.adversarial_start) CHECK(snapshot(net, true) == initial);
    };
    obs.after_adversarial_step = [&](int epoch, std::size_t, const models::NetworkTriplet& net) {
      CHECK(epoch > c.adversarial_start);
      changed_after = changed_after || snapshot(net, true) != initial;
    };
    const auto r = train_clarinet(fx.source, fx.target, c, nullptr, &obs);
    CHECK(checked_epochs == 4);
    CHECK(changed_after);
    for (const auto& m : r.metrics) CHECK(m.adv_loss.has_value() == (m.epoch > c.adversarial_start));
  }

  TEST_CASE("GAC equals CLARINET with the adversary never starting") {
    auto fx = make_fixture();
    auto c = small_config();
    c.adversarial_start = c.epochs;
    std::vector<std::vector<Tensor>> a_traj, b_traj;
    Observer oa, ob;
    oa.after_classifier_step = [&](const ClassifierStep&, const models::NetworkTriplet& n) {
      a_traj.push_back(snapshot(n, false));
    };
    ob.after_classifier_step = [&](const ClassifierStep&, const models::NetworkTriplet& n) {
      b_traj.push_back(snapshot(n, false));
    };
    auto a = train_clarinet(fx.source, fx.target, c, nullptr, &oa);
    auto b = train_gac(fx.source, c, nullptr, &ob);
    CHECK(a_traj.size() == b_traj.size());
    CHECK(a_traj == b_traj);
    CHECK(snapshot(a.model, false) == snapshot(b.model, false));
  }

  TEST_CASE("ascent fires exactly when a per-class loss is negative and follows grad L_neg") {
    // A tiny over-parameterized run drives per-class losses below zero.
    auto fx = make_fixture(32);
    auto c = small_config();
    c.epochs = 150;
    c.batch_size = 16;
    c.lr_classifier = 0.05;
    c.g_hidden = {32};
    std::size_t ascents = 0, descents = 0;
    std::vector<Tensor> d_before;
    Observer obs;
    obs.before_classifier_step = [&](const ClassifierStep& s, const models::NetworkTriplet& net) {
      const double mn = *std::min_element(s.per_class.begin(), s.per_class.end());
      CHECK((s.branch == Branch::ascent) == (mn < 0.0));
      s.branch == Branch::ascent ? ++ascents : ++descents;
      d_before = snapshot(net, true);

      // The gradient on theta_FG is the gradient of the chosen objective alone.
      auto copy = net;
      ad::Tape tape;
      const Tensor xs = fx.source.features().gather_rows(s.source_batch);
      std::vector<int> labels;
      for (auto i : s.source_batch) labels.push_back(fx.source.comp_labels()[i]);
      auto lp = losses::log_probabilities(copy.f.forward(copy.g.forward(tape.constant(xs))));
      auto br = losses::total_comp_loss(lp, complabel::partition_batch(labels, 4));
      const auto params = copy.classifier_parameters();
      const auto grads = ad::gradients(s.branch == Branch::ascent ? br.l_neg_node : br.total, params);
      auto live = const_cast<models::NetworkTriplet&>(net).classifier_parameters();
      for (std::size_t i = 0; i < params.size(); ++i) CHECK(grads[i] == live[i]->grad);
    };
    obs.after_classifier_step = [&](const ClassifierStep&, const models::NetworkTriplet& net) {
      CHECK(snapshot(net, true) == d_before);
    };
    const auto r = train_gac(fx.source, c, nullptr, &obs);
    CHECK(ascents > 0);
    CHECK(descents > 0);
    std::size_t recorded = 0;
    for (const auto& m : r.metrics) recorded += m.ascent_steps;
    CHECK(recorded == ascents);
  }

  TEST_CASE("reversal consistency: D and F o G move in opposite directions on L_adv") {
    auto fx = make_fixture(40);
    for (auto sign : {AdversarialSign::likelihood, AdversarialSign::as_written}) {
      CAPTURE(static_cast<int>(sign));
      auto c = small_config();
      c.epochs = 3;
      c.adversarial_start = 1;
      c.batch_size = 64;  // one batch per domain holding every sample
      c.momentum = 0.0;
      c.weight_decay = 0.0;
      c.adversarial_sign = sign;
      std::optional<models::NetworkTriplet> before;
      std::vector<std::size_t> src_batch;
      int checked = 0;
      Observer obs;
      obs.after_classifier_step = [&](const ClassifierStep& s, const models::NetworkTriplet& net) {
        before = net;
        src_batch.assign(s.source_batch.begin(), s.source_batch.end());
      };
      obs.after_adversarial_step = [&](int epoch, std::size_t, const models::NetworkTriplet& after) {
        const double lambda = lambda_schedule(static_cast<double>(epoch - 1) / 2.0);
        auto net = *before;
        ad::Tape tape;
        const Tensor xs = fx.source.features().gather_rows(src_batch);
        auto x = ad::concat_rows(tape.constant(xs), tape.constant(fx.target.features));
        auto g = net.g.forward(x);
        auto mapped = ad::scatter_map(ad::softmax(net.f.forward(g)), c.scatter_l);
        auto w = losses::entropy_weights(mapped.value());
        auto z = net.d.forward(ad::outer_flatten(g, mapped));
        const auto ns = xs.rows();
        auto adv = losses::adversarial_loss(ad::slice_rows(z, 0, ns), std::span(w).subspan(0, ns),
                                            ad::slice_rows(z, ns, z.rows()), std::span(w).subspan(ns));
        tape.backward(adv);
        const double d_dir = sign == AdversarialSign::likelihood ? 1.0 : -1.0;
        auto post = const_cast<models::NetworkTriplet&>(after);
        const auto d0 = net.discriminator_parameters(), d1 = post.discriminator_parameters();
        for (std::size_t i = 0; i < d0.size(); ++i)
          for (std::size_t j = 0; j < d0[i]->value.size(); ++j) {
            const double step = d1[i]->value[j] - d0[i]->value[j];
            CHECK(step == doctest::Approx(d_dir * c.lr_adversarial * d0[i]->grad[j]).epsilon(1e-7).scale(1e-12));
          }
        const auto f0 = net.classifier_parameters(), f1 = post.classifier_parameters();
        for (std::size_t i = 0; i < f0.size(); ++i)
          for (std::size_t j = 0; j < f0[i]->value.size(); ++j) {
            const double step = f1[i]->value[j] - f0[i]->value[j];
            CHECK(step ==
                  doctest::Approx(-d_dir * c.lr_adversarial * lambda * f0[i]->grad[j]).epsilon(1e-7).scale(1e-12));
          }
        ++checked;
      };
      (void)train_clarinet(fx.source, fx.target, c, nullptr, &obs);
      CHECK(checked == 2);
    }
  }

  TEST_CASE("lambda is non-decreasing across epochs") {
    auto fx = make_fixture(100);
    auto c = small_config();
    c.epochs = 8;
    c.adversarial_start = 2;
    const auto r = train_clarinet(fx.source, fx.target, c);
    for (std::size_t i = 1; i < r.metrics.size(); ++i) CHECK(r.metrics[i].lambda >= r.metrics[i - 1].lambda);
    CHECK(r.metrics.back().lambda == doctest::Approx(lambda_schedule(1.0)));
  }

  TEST_CASE("fixed seed gives bit-identical metrics") {
    auto fx = make_fixture();
    for (auto v : {Variant::clarinet, Variant::gac, Variant::two_step, Variant::ablation_ce, Variant::ablation_no_t}) {
      auto c = small_config();
      c.variant = v;
      const auto a = run_variant(fx.source, fx.target, c, &fx.target_true);
      const auto b = run_variant(fx.source, fx.target, c, &fx.target_true);
      REQUIRE(a.metrics.size() == b.metrics.size());
      for (std::size_t i = 0; i < a.metrics.size(); ++i) CHECK(metrics_csv_row(a.metrics[i]) == metrics_csv_row(b.metrics[i]));
      c.seed = 1;
      const auto d = run_variant(fx.source, fx.target, c, &fx.target_true);
      CHECK(metrics_csv_row(a.metrics.back()) != metrics_csv_row(d.metrics.back()));
    }
  }

  TEST_CASE("thread count does not change results") {
    auto fx = make_fixture();
    auto c = small_config();
    kernels::set_num_threads(1);
    const auto a = train_clarinet(fx.source, fx.target, c, &fx.target_true);
    kernels::set_num_threads(3);
    const auto b = train_clarinet(fx.source, fx.target, c, &fx.target_true);
    kernels::set_num_threads(1);
    for (std::size_t i = 0; i < a.metrics.size(); ++i) CHECK(metrics_csv_row(a.metrics[i]) == metrics_csv_row(b.metrics[i]));
  }

  TEST_CASE("two-step: stage-2 labels are the stage-1 argmax and noise is reported") {
    auto fx = make_fixture();
    auto c = small_config();
    c.variant = Variant::two_step;
    const auto r = train_two_step(fx.source, fx.target, c, &fx.target_true);
    REQUIRE(r.metrics.size() == 2 * static_cast<std::size_t>(c.epochs));
    CHECK(r.metrics[c.epochs].epoch == c.epochs + 1);
    REQUIRE(r.pseudo_label_noise.has_value());

    const auto stage1 = train_gac(fx.source, c);
    const auto pseudo = models::pseudo_label(stage1.model, fx.source.features());
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pseudo.size(); ++i) wrong += pseudo[i] != fx.source_true.labels[i];
    CHECK(*r.pseudo_label_noise == doctest::Approx(static_cast<double>(wrong) / pseudo.size()));

    // first stage-2 step: its loss is cross-entropy against those pseudo labels
    double first_stage2_total = 0.0;
    bool seen = false;
    Observer obs;
    obs.before_classifier_step = [&](const ClassifierStep& s, const models::NetworkTriplet& net) {
      if (s.epoch != c.epochs + 1 || seen) return;
      seen = true;
      first_stage2_total = s.total;
      ad::Tape tape;
      auto copy = net;
      const Tensor xs = fx.source.features().gather_rows(s.source_batch);
      std::vector<int> labels;
      for (auto i : s.source_batch) labels.push_back(pseudo[i]);
      auto lp = losses::log_probabilities(copy.f.forward(copy.g.forward(tape.constant(xs))));
      CHECK(losses::cross_entropy(lp, labels).value().item() == doctest::Approx(s.total).epsilon(1e-12));
    };
    (void)train_two_step(fx.source, fx.target, c, nullptr, &obs);
    CHECK(seen);
    CHECK(std::isfinite(first_stage2_total));
  }

  TEST_CASE("evaluate") {
    auto fx = make_fixture(40);
    auto c = small_config();
    auto r = train_gac(fx.source, c);
    // force a constant predictor: zero F weights, large bias on class 2
    for (auto* p : r.model.f.parameters()) p->value.fill(0.0);
    r.model.f.parameters()[1]->value[2] = 5.0;
    data::LabeledDataset balanced{Tensor(8, 2, 0.1), {0, 1, 2, 3, 0, 1, 2, 3}, 4, "b"};
    CHECK(evaluate(r.model, balanced) == doctest::Approx(0.25));
    balanced.labels.assign(8, 2);
    CHECK(evaluate(r.model, balanced) == 1.0);

    // counting oracle on 10 samples
    auto net = train_gac(fx.source, c).model;
    const Tensor x = fx.target_true.features.gather_rows(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto pred = models::pseudo_label(net, x);
    data::LabeledDataset ten{x, {}, 4, "ten"};
    int hit = 0;
    for (int i = 0; i < 10; ++i) {
      ten.labels.push_back(fx.target_true.labels[i]);
      hit += pred[i] == fx.target_true.labels[i];
    }
    CHECK(evaluate(net, ten) == doctest::Approx(hit / 10.0));
  }

  TEST_CASE("GAC learns the source from complementary labels") {
    auto fx = make_fixture(1000);
    auto c = small_config();
    c.epochs = 30;
    const auto r = train_gac(fx.source, c);
    const auto acc = evaluate(r.model, fx.source_true);
    CHECK(acc > 0.6);
  }

  TEST_CASE("domain shift: source-trained classifier is worse on the target") {
    data::SyntheticPairConfig sc;
    sc.spread = 0.3;
    sc.rotation_deg = 30;
    auto [s, t] = data::make_synthetic_pair(sc);
    std::mt19937_64 rng(1);
    const auto comp = complabel::generate_complementary(s, rng);
    auto c = small_config();
    c.epochs = 30;
    const auto r = train_gac(comp, c);
    const auto held = data::make_synthetic_source(sc, 0);
    CHECK(evaluate(r.model, t) < evaluate(r.model, held));
  }
}
