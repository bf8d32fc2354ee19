#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "hywu/tasks.hpp"

using namespace hywu;

TEST_CASE("delta = 0 gives identical operators, invalid delta is rejected") {
  auto [p, m] = make_opposing_pair(PairKind::scale, 8, 0.0, 4, 1);
  CHECK(p.op.data == m.op.data);
  CHECK_THROWS_AS(make_opposing_pair(PairKind::scale, 8, 1.0, 4, 1), ParameterError);
  CHECK_THROWS_AS(make_opposing_pair(PairKind::scale, 8, -0.1, 4, 1), ParameterError);
  CHECK_THROWS_AS(make_opposing_pair(PairKind::scale, 7, 0.5, 4, 1), ParameterError);
}

TEST_CASE("scale pair Frobenius gap matches hand arithmetic") {
  auto [p, m] = make_opposing_pair(PairKind::scale, 8, 0.5, 4, 1);
  double frob = 0.0;
  for (std::size_t i = 0; i < p.op.size(); ++i) {
    const double d = p.op.data[i] - m.op.data[i];
    frob += d * d;
  }
  CHECK(frob == doctest::Approx(4.0).epsilon(1e-12));  // (2*0.5)^2 * 4
}

TEST_CASE("scale pair operators are near-inverse up to O(delta^2)") {
  const double delta = 0.3;
  auto [p, m] = make_opposing_pair(PairKind::scale, 8, delta, 4, 1);
  // M+ * M- = I - delta^2 P.
  double frob = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      double prod = 0.0;
      for (std::size_t k = 0; k < 8; ++k) prod += p.op.data[i * 8 + k] * m.op.data[k * 8 + j];
      const double target = (i == j) ? 1.0 : 0.0;
      frob += (prod - target) * (prod - target);
    }
  }
  CHECK(std::sqrt(frob) <= 2.0 * delta * delta * std::sqrt(4.0));
}

TEST_CASE("compromise oracle closed form and Monte-Carlo cross-check") {
  auto [p, m] = make_opposing_pair(PairKind::scale, 8, 0.5, 4, 1);
  BackboneConfig cfg;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.linear = true;
  auto oracle = compromise_oracle(p, m, cfg);
  CHECK(oracle.l_star == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oracle.specialized_cross == doctest::Approx(4.0).epsilon(1e-12));

  // E||x D||^2 over unit Gaussians equals ||D||_F^2; 1e5 samples within 2%.
  Rng rng(99);
  double acc = 0.0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    auto x = rng.gaussian_vector(8);
    for (std::size_t j = 0; j < 8; ++j) {
      double e = 0.0;
      for (std::size_t i = 0; i < 8; ++i)
        e += x[i] * 0.5 * (p.op.data[i * 8 + j] - m.op.data[i * 8 + j]);
      acc += e * e;
    }
  }
  CHECK(acc / n == doctest::Approx(oracle.l_star).epsilon(0.02));
}

TEST_CASE("compromise oracle rejects the nonlinear backbone") {
  auto [p, m] = make_opposing_pair(PairKind::scale, 8, 0.5, 4, 1);
  BackboneConfig cfg;
  cfg.width = 8;
  cfg.linear = false;
  CHECK_THROWS_AS(compromise_oracle(p, m, cfg), ContractError);
}

TEST_CASE("rotation pair matches the Frobenius formula") {
  const double delta = 0.4;
  auto [p, m] = make_opposing_pair(PairKind::rotation, 6, delta, 4, 1);
  BackboneConfig cfg;
  cfg.width = 6;
  cfg.layers = 1;
  cfg.linear = true;
  auto oracle = compromise_oracle(p, m, cfg);
  // Per rotated 2x2 block the half-difference contributes 2 sin^2(phi).
  const double phi = std::asin(delta);
  const double want = 2.0 * std::sin(phi) * std::sin(phi) * 3.0;
  CHECK(oracle.l_star == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("exact operator used as a dense adapter achieves ~zero own-task loss") {
  auto [p, m] = make_opposing_pair(PairKind::scale, 8, 0.5, 4, 1);
  BackboneConfig cfg;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.linear = true;
  cfg.noise = 0.01;
  cfg.seed = 3;
  auto bb = build_backbone(cfg);

  Tensor delta = Tensor::zeros({8, 8});
  for (std::size_t i = 0; i < 64; ++i) delta.data[i] = p.op.data[i] - bb.weights[0].data[i];

  Rng rng(17);
  std::vector<TaskSpec> tasks{p, m};
  double loss = 0.0;
  const int n = 50;
  for (int t = 0; t < n; ++t) {
    auto inst = sample_instance(tasks, 0, rng);
    Tape tape;
    Tensor x({1, 8}, inst.x);
    LayerDeltas d{delta};
    auto y = backbone_forward(tape, bb, x, &d);
    for (std::size_t j = 0; j < 8; ++j)
      loss += (y.data[j] - inst.y[j]) * (y.data[j] - inst.y[j]);
  }
  CHECK(loss / n < 1e-20);
}

TEST_CASE("featurizer is deterministic and separates its two tokens") {
  auto [p, m] = make_opposing_pair(PairKind::scale, 8, 0.5, 6, 1);
  std::vector<TaskSpec> tasks{p, m};
  Featurizer feat(6, 8, 77);

  Rng rng(31);
  auto a = sample_instance(tasks, 0, rng);
  auto b = sample_instance(tasks, 0, rng);

  auto ua1 = feat.featurize(a, tasks);
  auto ua2 = feat.featurize(a, tasks);
  CHECK(ua1.data == ua2.data);

  auto ub = feat.featurize(b, tasks);
  // Token 1 (instruction) shared within a task; token 2 (sketch) differs.
  for (std::size_t i = 0; i < 6; ++i) CHECK(ua1.data[i] == ub.data[i]);
  CHECK(std::vector<double>(ua1.data.begin() + 6, ua1.data.end()) !=
        std::vector<double>(ub.data.begin() + 6, ub.data.end()));

  Instance zero{std::vector<double>(8, 0.0), 0, std::vector<double>(8, 0.0)};
  auto uz = feat.featurize(zero, tasks);
  for (std::size_t i = 6; i < 12; ++i) CHECK(uz.data[i] == 0.0);
}

TEST_CASE("dataset CSV round trip") {
  auto [p, m] = make_opposing_pair(PairKind::scale, 4, 0.5, 4, 1);
  std::vector<TaskSpec> tasks{p, m};
  Rng rng(8);
  std::vector<Instance> data;
  for (int i = 0; i < 10; ++i) data.push_back(sample_instance(tasks, i % 2, rng));

  const std::string path = "/tmp/hywu_test_dataset.csv";
  write_dataset_csv(path, data, tasks);
  auto back = read_dataset_csv(path, tasks);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].task == data[i].task);
    CHECK(back[i].x == data[i].x);
    CHECK(back[i].y == data[i].y);
  }
  std::remove(path.c_str());
}

TEST_CASE("block tasks form two opposing groups") {
  auto tasks = make_block_tasks(4, 8, 0.3, 0.1, 4, 5);
  REQUIRE(tasks.size() == 8);
  // Deviation from identity of block-0 tasks correlates positively within the
  // block and negatively across blocks.
  auto dev = [&](std::size_t t) {
    std::vector<double> d(64);
    for (std::size_t i = 0; i < 64; ++i)
      d[i] = tasks[t].op.data[i] - ((i % 9 == 0) ? 1.0 : 0.0);
    return d;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto d0 = dev(0), d1 = dev(1), d4 = dev(4);
  CHECK(dot(d0, d1) > 0.0);
  CHECK(dot(d0, d4) < 0.0);
}
