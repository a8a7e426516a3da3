#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "wrnlab/metrics.hpp"
#include "wrnlab/wrn.hpp"

using namespace wrnlab;
using testing::random_tensor;

namespace {

Dataset labelled_data(std::size_t n, std::size_t d, int classes, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::vector<int> labels(n);
  std::mt19937_64 rng(seed);
  for (auto& y : labels) y = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
  return testing::make_dataset(random_tensor({n, d, 1, 1}, seed + 1, lo, hi), labels, classes);
}

std::vector<double> row(const Tensor& x, std::size_t i) {
  const std::size_t per = x.numel() / x.dim(0);
  return {x.data().begin() + static_cast<std::ptrdiff_t>(i * per),
          x.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * per)};
}

// max over sign vectors s of |W s|_1.
double linear_inf_to_one(const Tensor& w) {
  const std::size_t k = w.dim(0), d = w.dim(1);
  double best = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += w[j * d + i] * ((mask >> i) & 1 ? 1.0 : -1.0);
      total += std::abs(s);
    }
    best = std::max(best, total);
  }
  return best;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("constant model") {
    const auto net = build_linear_model<double>(Shape{6, 1, 1}, 3);
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) labels.push_back(i % 3);
    const Dataset data = testing::make_dataset(random_tensor({30, 6, 1, 1}, 1, 0.0, 1.0), labels, 3);
    CHECK(accuracy(net, data) == doctest::Approx(1.0 / 3.0));
    const AttackConfig atk = AttackConfig::evaluation(0.1);
    CHECK(perturbation_stability(net, data, atk) == 1.0);
    CHECK(empirical_lipschitz(net, data, atk, NetworkScope{}).value == 0.0);
  }

  TEST_CASE("accuracy matches a hand count") {
    const auto net = testing::random_linear_model<double>(5, 4, 2);
    const Tensor& w = net.parameter("linear.weight").value;
    const Tensor& b = net.parameter("linear.bias").value;
    const Dataset data = labelled_data(20, 5, 4, 3);
    int correct = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      int best = 0;
      double top = -1e300;
      for (std::size_t j = 0; j < 4; ++j) {
        double z = b[j];
        for (std::size_t k = 0; k < 5; ++k) z += w[j * 5 + k] * data.images[i * 5 + k];
        if (z > top) top = z, best = static_cast<int>(j);
      }
      correct += best == data.labels[i];
    }
    CHECK(accuracy(net, data) == correct / 20.0);
    CHECK_THROWS_AS(accuracy(net, Dataset{}), ValidationError);
  }

  TEST_CASE("argmax ties go to the lowest index") {
    const Tensor z(Shape{2, 3}, std::vector<double>{1, 1, 0, 0, 2, 2});
    CHECK(argmax_rows(z) == std::vector<int>{0, 1});
  }

  TEST_CASE("epsilon zero: robust equals clean, everything stable") {
    const auto net = testing::random_linear_model<double>(6, 3, 4);
    const Dataset data = labelled_data(40, 6, 3, 5);
    const AttackConfig zero = AttackConfig::evaluation(0.0);
    CHECK(robust_accuracy(net, data, zero) == accuracy(net, data));
    CHECK(perturbation_stability(net, data, zero) == 1.0);
    CHECK(transfer_eval(net, net, data, zero) == accuracy(net, data));
  }

  TEST_CASE("set decomposition identity") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto net = testing::random_linear_model<double>(8, 3, 10 + seed);
      const Dataset data = labelled_data(60, 8, 3, 20 + seed);
      const AttackOutcomes o = attack_outcomes(net, data, AttackConfig::evaluation(0.05));
      CHECK(o.robust_accuracy() == o.correct_and_stable());
      CHECK(o.robust_accuracy() <= o.clean_accuracy());
      CHECK(o.robust_accuracy() <= o.stability());
      CHECK(robust_accuracy(net, data, AttackConfig::evaluation(0.05)) == o.robust_accuracy());
    }
  }

  TEST_CASE("robust accuracy tracks the exact linear oracle") {
    const std::size_t d = 10;
    const auto net = testing::random_linear_model<double>(d, 3, 30, 1.0);
    const Tensor& w = net.parameter("linear.weight").value;
    const Tensor& b = net.parameter("linear.bias").value;
    const Dataset data = labelled_data(200, d, 3, 31);
    const double eps = 0.05;
    const auto clean = predict(net, data);
    int oracle = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
      oracle += clean[i] == data.labels[i] && testing::linear_robust(w, b, row(data.images, i), data.labels[i], eps);
    const double got = robust_accuracy(net, data, AttackConfig::evaluation(eps));
    CHECK(std::abs(got - oracle / 200.0) <= 0.02);
  }

  TEST_CASE("scalar affine model gives |a|") {
    auto net = build_linear_model<double>(Shape{1, 1, 1}, 1);
    net.parameter("linear.weight").value[0] = -2.5;
    net.parameter("linear.bias").value[0] = 0.3;
    const Dataset data = labelled_data(10, 1, 1, 40, 0.2, 0.8);
    const auto est = empirical_lipschitz(net, data, AttackConfig::evaluation(0.05), NetworkScope{});
    CHECK(est.value == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(est.used == 10);
  }

  TEST_CASE("linear functionals: estimate within the corner optimum") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const std::size_t d = 6 + seed;
      const auto net = testing::random_linear_model<double>(d, 1, 50 + seed, 1.0);
      const double eps = 0.05;
      const Dataset data = labelled_data(10, d, 1, 60 + seed, eps, 1.0 - eps);
      const double oracle = linear_inf_to_one(net.parameter("linear.weight").value);
      const double est = empirical_lipschitz(net, data, AttackConfig::evaluation(eps), NetworkScope{}).value;
      CHECK(est <= oracle * (1 + 1e-12));
      CHECK(est >= 0.95 * oracle);
    }
  }

  TEST_CASE("multi-output linear maps: estimate never exceeds the corner optimum") {
    // Sign ascent on |W d|_1 can settle on a local vertex, so only the upper
    // side is tight here.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const std::size_t d = 6 + seed;
      const auto net = testing::random_linear_model<double>(d, 3, 50 + seed, 1.0);
      const double eps = 0.05;
      const Dataset data = labelled_data(10, d, 3, 60 + seed, eps, 1.0 - eps);
      const double oracle = linear_inf_to_one(net.parameter("linear.weight").value);
      const double est = empirical_lipschitz(net, data, AttackConfig::evaluation(eps), NetworkScope{}).value;
      CHECK(est <= oracle * (1 + 1e-12));
      CHECK(est >= 0.75 * oracle);
    }
  }

  TEST_CASE("network-scope estimate ignores labels") {
    Network<double> net = build_network<double>(parse_notation("d1-1-1_w1-1-1", 3, {3, 8, 8}), 70);
    testing::randomize_batch_norm(net, 71);
    std::vector<int> labels{0, 1, 2, 0, 1, 2};
    const Tensor x = random_tensor({6, 3, 8, 8}, 72, 0.0, 1.0);
    const Dataset a = testing::make_dataset(x, labels, 3);
    std::rotate(labels.begin(), labels.begin() + 1, labels.end());
    const Dataset b = testing::make_dataset(x, labels, 3);
    AttackConfig atk = AttackConfig::evaluation();
    atk.steps = 5;
    CHECK(empirical_lipschitz(net, a, atk, NetworkScope{}).value ==
          empirical_lipschitz(net, b, atk, NetworkScope{}).value);
  }

  TEST_CASE("scaling the classifier scales the estimate") {
    Network<double> net = build_network<double>(parse_notation("d1-1-1_w1-1-1", 3, {3, 8, 8}), 73);
    testing::randomize_batch_norm(net, 74);
    const Dataset data = testing::make_dataset(random_tensor({6, 3, 8, 8}, 75, 0.0, 1.0), {0, 1, 2, 0, 1, 2}, 3);
    AttackConfig atk = AttackConfig::evaluation();
    atk.steps = 5;
    const double base = empirical_lipschitz(net, data, atk, NetworkScope{}).value;
    const double c = 3.0;
    for (auto& v : net.parameter("head.linear.weight").value.data()) v *= c;
    const double scaled = empirical_lipschitz(net, data, atk, NetworkScope{}).value;
    CHECK(scaled >= 0.9 * c * base);
    CHECK(scaled <= 1.1 * c * base);
  }

  TEST_CASE("per-block estimates and scope errors") {
    Network<double> net = build_network<double>(parse_notation("d2-1-1_w1-1-1", 3, {3, 8, 8}), 76);
    const Dataset data = testing::make_dataset(random_tensor({4, 3, 8, 8}, 77, 0.0, 1.0), {0, 1, 2, 0}, 3);
    AttackConfig atk = AttackConfig::evaluation();
    atk.steps = 3;
    const auto all = per_block_lipschitz(net, data, atk);
    REQUIRE(all.size() == 5);
    CHECK(all[0].dimension == 16 * 8 * 8);
    CHECK(all.back().dimension == 3);
    for (const auto& e : all) CHECK(e.value > 0.0);
    CHECK(all[1].value == empirical_lipschitz(net, data, atk, 2).value);
    CHECK_THROWS_AS(empirical_lipschitz(net, data, atk, 5), ValidationError);
    CHECK_THROWS_AS(empirical_lipschitz(net, data, AttackConfig::evaluation(0.0), NetworkScope{}), NumericError);
    const std::string csv = per_block_csv(all);
    CHECK(csv.rfind("block_index,value\n", 0) == 0);
    CHECK(csv.find("\nnetwork,") != std::string::npos);
  }

  TEST_CASE("transfer evaluation") {
    const auto target = testing::random_linear_model<double>(6, 3, 80);
    const auto surrogate = testing::random_linear_model<double>(6, 3, 81);
    const Dataset data = labelled_data(50, 6, 3, 82);
    const AttackConfig atk = AttackConfig::evaluation(0.05);
    CHECK(transfer_eval(target, target, data, atk) == robust_accuracy(target, data, atk));
    CHECK(transfer_eval(surrogate, target, data, atk) >= robust_accuracy(target, data, atk));
    const auto other = build_linear_model<double>(Shape{6, 1, 1}, 4);
    CHECK_THROWS_AS(transfer_eval(other, target, data, atk), ShapeError);
  }

  TEST_CASE("evaluation report") {
    const auto net = testing::random_linear_model<double>(6, 3, 90);
    const Dataset data = labelled_data(30, 6, 3, 91);
    const std::vector<NamedAttack> attacks{{"pgd20", AttackConfig::evaluation(0.05)},
                                           {"fgsm", [] {
                                              AttackConfig c = AttackConfig::evaluation(0.05);
                                              c.steps = 1;
                                              c.step_size = 0.05;
                                              return c;
                                            }()}};
    const EvalReport r = evaluate(net, data, attacks, true);
    CHECK_NOTHROW(r.check_invariants());
    CHECK(r.sample_count == 30);
    CHECK(r.robust_acc.at("pgd20") <= r.robust_acc.at("fgsm") + 1e-12);
    CHECK(r.empirical_lipschitz.count("network") == 1);
    CHECK(csv_header(r).find("clean") != std::string::npos);
    const std::string header = csv_header(r), line = csv_row(r);
    CHECK(std::count(line.begin(), line.end(), ',') == std::count(header.begin(), header.end(), ','));
    EvalReport bad = r;
    bad.robust_acc["pgd20"] = r.clean_acc + 0.1;
    CHECK_THROWS(bad.check_invariants());
  }

  TEST_CASE("worker count does not change metrics") {
    Network<float> net = build_network<float>(parse_notation("d1-1-1_w1-1-1", 3, {3, 8, 8}), 92);
    testing::randomize_batch_norm(net, 93);
    const Dataset data = testing::make_dataset(random_tensor({9, 3, 8, 8}, 94, 0.0, 1.0), {0, 1, 2, 0, 1, 2, 0, 1, 2}, 3);
    AttackConfig atk = AttackConfig::evaluation();
    atk.steps = 3;
    EvalOptions one{4, 1}, three{2, 3};
    CHECK(empirical_lipschitz(net, data, atk, NetworkScope{}, one).value ==
          empirical_lipschitz(net, data, atk, NetworkScope{}, three).value);
    const auto a = attack_outcomes(net, data, atk, one), b = attack_outcomes(net, data, atk, three);
    for (std::size_t i = 0; i < 9; ++i) CHECK(a.samples[i].adv_pred == b.samples[i].adv_pred);
  }
}
