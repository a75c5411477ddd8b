#include <doctest.h>

#include <cmath>
#include <random>

#include "clarinet/complabel.hpp"
#include "clarinet/error.hpp"

using namespace clarinet;
using namespace clarinet::complabel;

TEST_SUITE("complabel") {
  TEST_CASE("K=3 transition matrix and inverse") {
    const auto t = transition_matrix(3);
    const auto h = 0.5;
    CHECK(t.q == Tensor::matrix({{0, h, h}, {h, 0, h}, {h, h, 0}}));
    CHECK(t.q_inv == Tensor::matrix({{-1, 1, 1}, {1, -1, 1}, {1, 1, -1}}));
  }

  TEST_CASE("K=2 swap matrix is self-inverse") {
    const auto t = transition_matrix(2);
    CHECK(t.q == Tensor::matrix({{0, 1}, {1, 0}}));
    CHECK(t.q_inv == t.q);
  }

  TEST_CASE("Q times Qinv is the identity") {
    for (int k : {4, 10, 37}) {
      const auto t = transition_matrix(k);
      double worst = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          double s = 0.0;
          for (int r = 0; r < k; ++r) s += t.q(i, r) * t.q_inv(r, j);
          worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
      CHECK(worst < 1e-12);
    }
  }

  TEST_CASE("K below 2 is rejected") {
    CHECK_THROWS_AS(transition_matrix(1), ContractError);
    std::mt19937_64 rng(0);
    CHECK_THROWS_AS(draw_complementary(0, 1, rng), ContractError);
  }

  TEST_CASE("K=2 draw is deterministic") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) CHECK(draw_complementary(0, 2, rng) == 1);
  }

  TEST_CASE("complementary draws are uniform over the other classes") {
    std::mt19937_64 rng(11);
    const int n = 400000;
    std::array<int, 4> counts{};
    for (int i = 0; i < n; ++i) ++counts[draw_complementary(0, 4, rng)];
    CHECK(counts[0] == 0);
    double chi2 = 0.0;
    for (int k = 1; k < 4; ++k) {
      const double freq = static_cast<double>(counts[k]) / n;
      CHECK(std::abs(freq - 1.0 / 3.0) < 0.005);
      const double e = n / 3.0;
      chi2 += (counts[k] - e) * (counts[k] - e) / e;
    }
    // 2 degrees of freedom, p = 0.001 critical value
    CHECK(chi2 < 13.82);
  }

  TEST_CASE("never draws the true label, for every class") {
    std::mt19937_64 rng(5);
    for (int k = 2; k <= 10; ++k)
      for (int y = 0; y < k; ++y)
        for (int i = 0; i < 50; ++i) {
          const int c = draw_complementary(y, k, rng);
          CHECK(c != y);
          CHECK(c >= 0);
          CHECK(c < k);
        }
  }

  TEST_CASE("generate_complementary keeps hidden labels behind the key") {
    data::LabeledDataset ds{Tensor::matrix({{0, 0}, {1, 1}, {2, 2}}), {0, 1, 2}, 3, "toy"};
    std::mt19937_64 rng(1);
    const auto before = hidden_label_grants();
    const auto c = generate_complementary(ds, rng);
    CHECK(c.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(c.comp_labels()[i] != ds.labels[i]);
    CHECK(c.has_hidden_labels());
    const auto hidden = c.hidden_true_labels(EvaluationKey::grant("test"));
    CHECK(std::vector<int>(hidden.begin(), hidden.end()) == ds.labels);
    CHECK(hidden_label_grants() == before + 1);
  }

  TEST_CASE("recover_posterior") {
    auto eta = recover_posterior(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
    for (double e : eta) CHECK(e == doctest::Approx(1.0 / 3));
    eta = recover_posterior(std::vector<double>{0.0, 0.5, 0.5});
    CHECK(eta[0] == doctest::Approx(1.0));
    CHECK(eta[1] == doctest::Approx(0.0));
    CHECK(eta[2] == doctest::Approx(0.0));
    CHECK_THROWS_AS(recover_posterior(std::vector<double>{0.5, 0.6, 0.0}), ContractError);
    CHECK_THROWS_AS(recover_posterior(std::vector<double>{-0.1, 0.6, 0.5}), ContractError);
  }

  TEST_CASE("recover_posterior inverts Q") {
    std::mt19937_64 rng(2);
    std::gamma_distribution<double> g(1.0);
    for (int k = 2; k <= 12; ++k) {
      std::vector<double> eta(k);
      double s = 0;
      for (auto& e : eta) s += (e = g(rng));
      for (auto& e : eta) e /= s;
      const auto t = transition_matrix(k);
      std::vector<double> bar(k, 0.0);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) bar[i] += t.q(i, j) * eta[j];
      const auto back = recover_posterior(bar);
      for (int i = 0; i < k; ++i) CHECK(std::abs(back[i] - eta[i]) < 1e-12);
    }
  }

  TEST_CASE("partition_batch") {
    // labels [1,1,3] in 1-based form
    const std::vector<int> labels = {0, 0, 2};
    const auto p = partition_batch(labels, 3);
    CHECK(p.counts == std::vector<std::size_t>{2, 0, 1});
    CHECK(p.priors[0] == doctest::Approx(2.0 / 3));
    CHECK(p.priors[1] == 0.0);
    CHECK(p.priors[2] == doctest::Approx(1.0 / 3));
    CHECK(p.subsets[0] == std::vector<std::size_t>{0, 1});
    CHECK(p.subsets[2] == std::vector<std::size_t>{2});

    const std::vector<int> same = {1, 1, 1, 1};
    const auto q = partition_batch(same, 3);
    CHECK(q.priors == std::vector<double>{0.0, 1.0, 0.0});

    CHECK_THROWS_AS(partition_batch(std::vector<int>{}, 3), ContractError);
    CHECK_THROWS_AS(partition_batch(std::vector<int>{3}, 3), ContractError);
  }

  TEST_CASE("partition property: subsets are disjoint and cover the batch") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      const int k = 2 + static_cast<int>(rng() % 9);
      const std::size_t n = 1 + rng() % 64;
      std::vector<int> labels(n);
      for (auto& l : labels) l = static_cast<int>(rng() % k);
      const auto p = partition_batch(labels, k);
      std::vector<int> seen(n, 0);
      double prior_sum = 0.0;
      for (int c = 0; c < k; ++c) {
        CHECK(p.subsets[c].size() == p.counts[c]);
        for (auto i : p.subsets[c]) {
          ++seen[i];
          CHECK(labels[i] == c);
        }
        prior_sum += p.priors[c];
      }
      for (int s : seen) CHECK(s == 1);
      CHECK(prior_sum == doctest::Approx(1.0));
    }
  }
}
