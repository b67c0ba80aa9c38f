#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "xgrad/training.hpp"

using namespace xgrad;

namespace {

DatasetHandle small_dataset(uint64_t seed, int64_t n_samples = 64, int64_t n_features = 8) {
  GeneratorSpec gs;
  gs.n_samples = n_samples;
  gs.n_features = n_features;
  gs.n_informative = 3;
  gs.shift = 0.8;
  gs.label_flip = 0.0;
  return generate_synthetic(gs, seed);
}

}  // namespace

TEST_CASE("gini_prior: closed-form values") {
  // uniform mean attribution -> 0
  Tensor uniform = Tensor::full({4, 6}, 0.37);
  CHECK(gini_prior(uniform) == doctest::Approx(0.0));

  // one-hot mean attribution over n features, batch m -> -2(n-1)/m
  const int64_t m = 4, n = 6;
  Tensor onehot = Tensor::zeros({m, n});
  for (int64_t s = 0; s < m; ++s) onehot.at(s, 0) = 1.0;  // column mean = (1,0,...,0)
  CHECK(gini_prior(onehot) == doctest::Approx(-2.0 * static_cast<double>(n - 1) /
                                              static_cast<double>(m))
                                  .epsilon(1e-6));

  // doubling the attributions leaves the ratio unchanged
  Tensor doubled = onehot;
  for (double& v : doubled.data) v *= 2.0;
  CHECK(gini_prior(doubled) == doctest::Approx(gini_prior(onehot)).epsilon(1e-6));

  CHECK(gini_prior(onehot) <= 0.0);
  CHECK_THROWS_AS(gini_prior(Tensor::zeros({3, 1})), ValueError);
}

TEST_CASE("gini_prior gradient matches finite differences (second-order path)") {
  Graph g;
  Value A = g.leaf(Tensor({3, 4}, {0.3, -0.1, 0.8, 0.2, 0.5, 0.1, -0.3, 0.9, 0.0, 0.4, 0.6, -0.2}));
  Value omega = gini_prior_node(g, A);
  CHECK(g.gradient_check(omega, A, 1e-6) < 1e-7);
}

TEST_CASE("bce and softmax losses match hand-computed values and differentiate") {
  Graph g;
  Value Z = g.leaf(Tensor({1, 2}, {0.8, -0.4}));
  Value L = bce_loss_node(g, Z, {1, 0});
  const double expected =
      0.5 * ((std::log(1.0 + std::exp(-0.8))) + (std::log(1.0 + std::exp(-0.4))));
  CHECK(g.value(L).scalar_value() == doctest::Approx(expected));
  CHECK(g.gradient_check(L, Z, 1e-6) < 1e-8);

  Graph g2;
  Value Z2 = g2.leaf(Tensor({3, 2}, {1.0, 0.2, -0.5, 1.4, 0.3, -0.9}));
  Value L2 = softmax_ce_loss_node(g2, Z2, {0, 2});
  const double c0 = std::log(std::exp(1.0) + std::exp(-0.5) + std::exp(0.3)) - 1.0;
  const double c1 = std::log(std::exp(0.2) + std::exp(1.4) + std::exp(-0.9)) - (-0.9);
  CHECK(g2.value(L2).scalar_value() == doctest::Approx(0.5 * (c0 + c1)));
  CHECK(g2.gradient_check(L2, Z2, 1e-6) < 1e-8);
}

TEST_CASE("objective gradient (task + lambda * gini(XG)) matches finite differences") {
  // second-order probe: a 2-layer net with 20 parameters
  DatasetHandle ds = small_dataset(21, 8, 4);
  Network net = init(make_mlp(4, {4}, 1, false), 22);  // 16 + 4 = 20 parameters
  const int64_t mb = 8, n = 4;
  Tensor batch = Tensor::zeros({n, mb});
  std::vector<int64_t> labels(static_cast<size_t>(mb));
  for (int64_t s = 0; s < mb; ++s) {
    labels[static_cast<size_t>(s)] = ds.labels[static_cast<size_t>(s)];
    for (int64_t i = 0; i < n; ++i) batch.at(i, s) = ds.features.at(s, i);
  }
  Graph g;
  BoundNetwork b = bind(g, net);
  Value X = g.leaf(batch);
  Value Z = b.apply_batch(X);
  Value task = bce_loss_node(g, Z, labels);
  PriorConfig pc;
  pc.method = PriorAttrMethod::Xg;
  pc.lambda = 1.0;
  Rng rng(23);
  Value A = batch_attribution_node(g, b, X, std::vector<int64_t>(mb, 0), pc, ds, rng);
  Value omega = gini_prior_node(g, g.transpose(A));
  Value obj = g.add(task, g.scale(omega, pc.lambda));
  // recorded objective decomposes exactly into task + lambda * prior
  CHECK(g.value(obj).scalar_value() ==
        g.value(task).scalar_value() + pc.lambda * g.value(omega).scalar_value());
  for (Value p : b.param_leaves) CHECK(g.gradient_check(obj, p, 1e-4) < 1e-3);
}

TEST_CASE("gini_prior is nonpositive, zero only for constant mean attributions") {
  Rng rng(97);
  for (int t = 0; t < 50; ++t) {
    const int64_t m = 1 + rng.below(6), n = 2 + rng.below(8);
    Tensor A = Tensor::zeros({m, n});
    for (double& v : A.data) v = rng.uniform(-2.0, 2.0);
    CHECK(gini_prior(A) <= 0.0);
  }
  CHECK(gini_prior(Tensor::full({3, 5}, -1.25)) == doctest::Approx(0.0));
}

TEST_CASE("in-training batch attribution equals the standalone module") {
  DatasetHandle ds = small_dataset(31, 16, 6);
  Network net = init(make_mlp(6, {5}, 1, false), 32);
  const int64_t mb = 16, n = 6;
  Tensor batch = Tensor::zeros({n, mb});
  for (int64_t s = 0; s < mb; ++s)
    for (int64_t i = 0; i < n; ++i) batch.at(i, s) = ds.features.at(s, i);
  Graph g;
  BoundNetwork b = bind(g, net);
  Value X = g.leaf(batch);
  PriorConfig pc;
  pc.method = PriorAttrMethod::Xg;
  Rng rng(33);
  const Tensor A = g.value(batch_attribution_node(g, b, X, std::vector<int64_t>(mb, 0), pc, ds, rng));
  for (int64_t s = 0; s < mb; ++s) {
    Attribution standalone = x_gradient(net, ds.sample(s), 0);
    for (int64_t i = 0; i < n; ++i) CHECK(A.at(i, s) == standalone.values[i]);
  }
}

TEST_CASE("train: lambda=0 and no-prior runs are bitwise identical") {
  DatasetHandle ds = small_dataset(41);
  Network net0 = init(make_mlp(8, {6}, 1, false), 42);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  PriorConfig off;
  off.method = PriorAttrMethod::Xg;
  off.lambda = 0.0;
  TrainResult plain = train(net0, ds, nullptr, tc, nullptr);
  TrainResult zero = train(net0, ds, nullptr, tc, &off);
  CHECK(plain.net.params == zero.net.params);
  REQUIRE(plain.trace.size() == zero.trace.size());
  for (size_t e = 0; e < plain.trace.size(); ++e) {
    CHECK(plain.trace[e].train_task_loss == zero.trace[e].train_task_loss);
    CHECK(plain.trace[e].train_total_loss == zero.trace[e].train_total_loss);
  }
}

TEST_CASE("train: deterministic under seed, objective decomposition recorded") {
  DatasetHandle ds = small_dataset(51);
  Network net0 = init(make_mlp(8, {6}, 1, false), 52);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  PriorConfig pc;
  pc.method = PriorAttrMethod::Xg;
  pc.lambda = 0.5;
  TrainResult a = train(net0, ds, &ds, tc, &pc);
  TrainResult b = train(net0, ds, &ds, tc, &pc);
  CHECK(a.net.params == b.net.params);
  for (size_t e = 0; e < a.trace.size(); ++e) {
    CHECK(a.trace[e].val_metric == b.trace[e].val_metric);
    // prior is active: total and task losses differ
    CHECK(a.trace[e].train_total_loss != a.trace[e].train_task_loss);
  }
}

TEST_CASE("train: xg prior demands a homogeneous network") {
  DatasetHandle ds = small_dataset(61);
  Network biased = init(make_mlp(8, {6}, 1, true), 62);
  TrainConfig tc;
  tc.epochs = 1;
  PriorConfig pc;
  pc.method = PriorAttrMethod::Xg;
  pc.lambda = 1.0;
  CHECK_THROWS_AS(train(biased, ds, nullptr, tc, &pc), HomogeneityError);
}

TEST_CASE("train: all prior attribution methods run and improve the loss") {
  DatasetHandle ds = small_dataset(71, 96, 10);
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 16;
  for (PriorAttrMethod method : {PriorAttrMethod::Grad, PriorAttrMethod::Rrr, PriorAttrMethod::Eg,
                                 PriorAttrMethod::Xg}) {
    const bool needs_homogeneous = method == PriorAttrMethod::Xg;
    Network net0 = init(make_mlp(10, {8}, 1, !needs_homogeneous), 72);
    PriorConfig pc;
    pc.method = method;
    pc.lambda = 0.1;
    pc.eg_references = 2;
    TrainResult res = train(net0, ds, nullptr, tc, &pc);
    CHECK(res.trace.back().train_task_loss < res.trace.front().train_task_loss);
  }
}

TEST_CASE("train: gini(XG) prior concentrates attribution mass") {
  GeneratorSpec gs;
  gs.n_samples = 160;
  gs.n_features = 16;
  gs.n_informative = 2;
  gs.shift = 1.0;
  gs.label_flip = 0.0;
  DatasetHandle ds = generate_synthetic(gs, 81);
  Network net0 = init(make_mlp(16, {10}, 1, false), 82);
  TrainConfig tc;
  tc.epochs = 15;
  tc.batch_size = 16;
  PriorConfig pc;
  pc.method = PriorAttrMethod::Xg;
  pc.lambda = 1.0;
  TrainResult plain = train(net0, ds, nullptr, tc, nullptr);
  TrainResult sparse = train(net0, ds, nullptr, tc, &pc);

  auto mean_abs_xg = [&](const Network& net) {
    std::vector<double> mean(16, 0.0);
    for (int64_t i = 0; i < 40; ++i) {
      Attribution a = x_gradient(net, ds.sample(i), 0);
      for (int64_t j = 0; j < 16; ++j) mean[static_cast<size_t>(j)] += std::abs(a.values[j]) / 40.0;
    }
    return mean;
  };
  std::vector<double> plain_attr = mean_abs_xg(plain.net);
  std::vector<double> sparse_attr = mean_abs_xg(sparse.net);
  CHECK(gini_coefficient(sparse_attr) > gini_coefficient(plain_attr));
}

TEST_CASE("train: zero-attribution-mask prior suppresses the masked features") {
  GeneratorSpec gs;
  gs.n_samples = 120;
  gs.n_features = 8;
  gs.n_informative = 4;
  gs.shift = 0.9;
  gs.label_flip = 0.0;
  DatasetHandle ds = generate_synthetic(gs, 91);
  Network net0 = init(make_mlp(8, {6}, 1, false), 92);
  TrainConfig tc;
  tc.epochs = 25;
  tc.batch_size = 12;
  tc.learning_rate = 3e-3;
  PriorConfig pc;
  pc.method = PriorAttrMethod::Xg;
  pc.kind = PriorKind::ZeroAttributionMask;
  pc.masked_features = {0, 1};
  pc.lambda = 20.0;
  TrainResult masked = train(net0, ds, nullptr, tc, &pc);
  TrainResult plain = train(net0, ds, nullptr, tc, nullptr);
  auto mass_on = [&](const Network& net, std::span<const int64_t> feats) {
    double acc = 0.0;
    for (int64_t i = 0; i < 30; ++i) {
      Attribution a = x_gradient(net, ds.sample(i), 0);
      for (int64_t f : feats) acc += std::abs(a.values[f]);
    }
    return acc;
  };
  const std::vector<int64_t> feats = {0, 1};
  CHECK(mass_on(masked.net, feats) < 0.25 * mass_on(plain.net, feats));
}

TEST_CASE("roc_auc: enumerated pairs, perfect separation, errors") {
  std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
  std::vector<int64_t> labels = {0, 0, 1, 1};
  CHECK(roc_auc(scores, labels) == doctest::Approx(0.75));

  std::vector<double> perfect = {-2, -1, 1, 2};
  std::vector<int64_t> plabels = {0, 0, 1, 1};
  CHECK(roc_auc(perfect, plabels) == 1.0);

  // ties count half
  std::vector<double> tied = {1, 1};
  std::vector<int64_t> tlabels = {0, 1};
  CHECK(roc_auc(tied, tlabels) == doctest::Approx(0.5));

  std::vector<int64_t> ones = {1, 1, 1, 1};
  CHECK_THROWS_AS(roc_auc(scores, ones), ValueError);

  Rng rng(100);
  std::vector<double> random_scores(4000);
  std::vector<int64_t> random_labels(4000);
  for (size_t i = 0; i < 4000; ++i) {
    random_scores[i] = rng.normal();
    random_labels[i] = rng.bernoulli(0.5) ? 1 : 0;
  }
  CHECK(roc_auc(random_scores, random_labels) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("subsample_experiment: disjoint splits, deterministic summaries") {
  GeneratorSpec gs;
  gs.n_samples = 400;
  gs.n_features = 12;
  gs.n_informative = 4;
  gs.shift = 0.7;
  DatasetHandle ds = generate_synthetic(gs, 111);
  NetworkSpec spec = make_mlp(12, {8}, 1, true);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 10;
  std::vector<ExperimentArm> arms;
  arms.push_back({"unreg", std::nullopt, false});
  arms.push_back({"unreg-nobias", std::nullopt, true});
  auto s1 = subsample_experiment(ds, spec, 4, 50, arms, tc, 7, 2);
  auto s2 = subsample_experiment(ds, spec, 4, 50, arms, tc, 7, 1);
  REQUIRE(s1.size() == 2);
  CHECK(s1[0].aucs == s2[0].aucs);  // thread count does not change results
  CHECK(s1[1].aucs == s2[1].aucs);
  for (const auto& s : s1) {
    CHECK(s.mean > 0.3);
    CHECK(s.sem2 >= 0.0);
    CHECK(s.aucs.size() == 4);
  }
  CHECK_THROWS_AS(subsample_experiment(ds, spec, 2, 300, arms, tc, 7, 1), ValueError);
}
