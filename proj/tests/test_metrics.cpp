#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>

#include "xgrad/metrics.hpp"
#include "xgrad/training.hpp"

using namespace xgrad;

namespace {

AttrFn xg_fn() {
  return [](const Network& net, const Tensor& x, int64_t t) { return x_gradient(net, x, t); };
}
AttrFn ig_fn(int64_t steps) {
  return [steps](const Network& net, const Tensor& x, int64_t t) {
    return integrated_gradients(net, x, Tensor::zeros(x.shape), steps, t);
  };
}
AttrFn random_fn(uint64_t seed) {
  return [seed, calls = std::make_shared<uint64_t>(0)](const Network&, const Tensor& x,
                                                       int64_t) mutable {
    return random_attr(x, derive_seed(seed, (*calls)++));
  };
}
AttrFn constant_zero_fn() {
  return [](const Network&, const Tensor& x, int64_t) {
    Attribution a;
    a.values = Tensor::zeros(x.shape);
    a.method = MethodKind::Random;
    return a;
  };
}

DatasetHandle benchmark_data(uint64_t seed, int64_t n_samples = 60, int64_t n_features = 10) {
  GeneratorSpec gs;
  gs.n_samples = n_samples;
  gs.n_features = n_features;
  gs.n_informative = 4;
  gs.shift = 0.9;
  gs.label_flip = 0.0;
  return generate_synthetic(gs, seed);
}

Network trained_xdnn(const DatasetHandle& ds, uint64_t seed, int64_t epochs = 10) {
  Network net0 = init(make_mlp(ds.num_features(), {8}, 1, false), seed);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 12;
  tc.seed = seed;
  return train(net0, ds, nullptr, tc, nullptr).net;
}

}  // namespace

TEST_CASE("mask function replaces features by reference values") {
  DatasetHandle ds = benchmark_data(1, 20, 4);
  MaskFn mask = MaskFn::mean_substitution(ds);
  Tensor x = ds.sample(0);
  std::vector<int64_t> all = {0, 1, 2, 3};
  Tensor fully = mask.apply(x, all);
  CHECK(fully.data == column_means(ds).data);
  Tensor partial = mask.apply(x, std::vector<int64_t>{2});
  CHECK(partial[0] == x[0]);
  CHECK(partial[2] == column_means(ds)[2]);

  MaskFn zero = MaskFn::fixed_reference(Tensor::zeros({4}));
  CHECK(zero.apply(x, all).data == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("kpm: fraction 1.0 is attribution-independent; curves deterministic") {
  DatasetHandle ds = benchmark_data(2, 30, 8);
  Network net = trained_xdnn(ds, 3);
  MaskFn mask = MaskFn::mean_substitution(ds);
  std::vector<double> fr = default_fractions();
  MetricResult xg1 = keep_positive_mask(net, ds, xg_fn(), "xg", mask, fr);
  MetricResult xg2 = keep_positive_mask(net, ds, xg_fn(), "xg", mask, fr);
  CHECK(xg1.curve == xg2.curve);
  MetricResult rnd = keep_positive_mask(net, ds, random_fn(9), "random", mask, fr);
  CHECK(xg1.curve.back().second == doctest::Approx(rnd.curve.back().second).epsilon(1e-12));
}

TEST_CASE("knm of a sign-flipped network mirrors kpm") {
  DatasetHandle ds = benchmark_data(4, 24, 6);
  Network net = trained_xdnn(ds, 5);
  Network flipped = net;  // negate the last dense layer
  for (auto& [name, t] : flipped.params)
    if (name == "layer2.weight")
      for (double& v : t.data) v = -v;
  MaskFn mask = MaskFn::fixed_reference(Tensor::zeros({6}));
  std::vector<double> fr = default_fractions();
  // the flipped net's own attribution is the negation of the original's, so
  // its KNM curve mirrors the original's KPM curve
  MetricResult kpm = keep_positive_mask(net, ds, xg_fn(), "xg", mask, fr);
  MetricResult knm = keep_negative_mask(flipped, ds, xg_fn(), "xg", mask, fr);
  REQUIRE(kpm.curve.size() == knm.curve.size());
  for (size_t i = 0; i < kpm.curve.size(); ++i)
    CHECK(knm.curve[i].second == doctest::Approx(-kpm.curve[i].second).epsilon(1e-9));
  CHECK(knm.auc == doctest::Approx(-kpm.auc).epsilon(1e-9));
}

TEST_CASE("constant-zero attribution makes kpm and knm coincide") {
  DatasetHandle ds = benchmark_data(6, 20, 6);
  Network net = trained_xdnn(ds, 7);
  MaskFn mask = MaskFn::mean_substitution(ds);
  std::vector<double> fr = default_fractions();
  MetricResult kpm = keep_positive_mask(net, ds, constant_zero_fn(), "const", mask, fr);
  MetricResult knm = keep_negative_mask(net, ds, constant_zero_fn(), "const", mask, fr);
  CHECK(kpm.curve == knm.curve);
}

TEST_CASE("kam starts at clean accuracy; ram drops faster for faithful attributions") {
  DatasetHandle ds = benchmark_data(8, 40, 8);
  Network net = trained_xdnn(ds, 9);
  MaskFn mask = MaskFn::mean_substitution(ds);
  std::vector<double> fr = default_fractions();
  MetricResult kam = keep_absolute_mask(net, ds, xg_fn(), "xg", mask, fr);
  double clean = 0.0;
  for (int64_t i = 0; i < ds.num_samples(); ++i)
    clean += predicted_class(predict(net, ds.sample(i))) == ds.labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
  clean /= static_cast<double>(ds.num_samples());
  CHECK(kam.curve.front().second == doctest::Approx(clean));
  CHECK(kam.curve.front().first == 0.0);
}

TEST_CASE("trained net: xg beats random on all four metrics") {
  DatasetHandle full = benchmark_data(10, 400, 10);
  Network net = trained_xdnn(full, 11, 20);
  std::vector<int64_t> head(100);
  for (size_t i = 0; i < head.size(); ++i) head[i] = static_cast<int64_t>(i);
  DatasetHandle ds = subset(full, head);
  MaskFn mask = MaskFn::mean_substitution(ds);
  std::vector<double> fr = default_fractions();
  MetricResult kpm_x = keep_positive_mask(net, ds, xg_fn(), "xg", mask, fr);
  MetricResult kpm_r = keep_positive_mask(net, ds, random_fn(1), "random", mask, fr);
  CHECK(kpm_x.auc > kpm_r.auc);
  MetricResult knm_x = keep_negative_mask(net, ds, xg_fn(), "xg", mask, fr);
  MetricResult knm_r = keep_negative_mask(net, ds, random_fn(2), "random", mask, fr);
  CHECK(knm_x.auc < knm_r.auc);
  MetricResult kam_x = keep_absolute_mask(net, ds, xg_fn(), "xg", mask, fr);
  MetricResult kam_r = keep_absolute_mask(net, ds, random_fn(3), "random", mask, fr);
  CHECK(kam_x.auc > kam_r.auc);
  MetricResult ram_x = remove_absolute_mask(net, ds, xg_fn(), "xg", mask, fr);
  MetricResult ram_r = remove_absolute_mask(net, ds, random_fn(4), "random", mask, fr);
  CHECK(ram_x.auc < ram_r.auc);
}

TEST_CASE("benchmark_table: xg row becomes N/A on biased networks") {
  DatasetHandle ds = benchmark_data(12, 16, 6);
  Network biased = init(make_mlp(6, {5}, 1, true), 13);
  MaskFn mask = MaskFn::mean_substitution(ds);
  std::vector<double> fr = default_fractions();
  std::vector<std::pair<std::string, AttrFn>> methods = {{"xg", xg_fn()}, {"ig128", ig_fn(128)}};
  std::vector<MetricResult> table = benchmark_table(biased, ds, methods, mask, fr);
  REQUIRE(table.size() == 8);
  for (const MetricResult& r : table) {
    if (r.method == "xg")
      CHECK(r.not_applicable);
    else
      CHECK_FALSE(r.not_applicable);
  }
  const std::string rendered = render_metrics_table(table);
  CHECK(rendered.find("N/A") != std::string::npos);

  const std::string path = "metrics_out.csv";
  write_metrics_csv(path, table);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "metric,method,fraction,value");
  std::remove(path.c_str());
}

TEST_CASE("xg and ig@128 agree on an X-DNN within 1% on every metric") {
  DatasetHandle ds = benchmark_data(14, 30, 8);
  Network net = trained_xdnn(ds, 15);
  MaskFn mask = MaskFn::mean_substitution(ds);
  std::vector<double> fr = default_fractions();
  for (auto metric : {MaskMetric::KPM, MaskMetric::KNM, MaskMetric::KAM, MaskMetric::RAM}) {
    auto run = [&](const AttrFn& fn) {
      switch (metric) {
        case MaskMetric::KPM: return keep_positive_mask(net, ds, fn, "m", mask, fr);
        case MaskMetric::KNM: return keep_negative_mask(net, ds, fn, "m", mask, fr);
        case MaskMetric::KAM: return keep_absolute_mask(net, ds, fn, "m", mask, fr);
        case MaskMetric::RAM: return remove_absolute_mask(net, ds, fn, "m", mask, fr);
      }
      throw ValueError("bad metric");
    };
    MetricResult mx = run(xg_fn());
    MetricResult mi = run(ig_fn(128));
    CHECK(std::abs(mx.auc - mi.auc) <= 0.01 * std::max(1.0, std::abs(mi.auc)));
  }
}

TEST_CASE("kpm ordering by true linear contributions is optimal (brute force over orderings)") {
  // linear bias-free model; zero-reference mask; contribution c_i = w_i * x_i
  const int64_t n = 6;
  Network net;
  net.spec = make_mlp(n, {}, 1, false);
  net.params.emplace("layer0.weight", Tensor({1, n}, {0.8, -1.2, 0.4, 1.5, -0.3, 0.9}));
  DatasetHandle ds;
  ds.features = Tensor({1, n}, {1.0, 0.5, -2.0, 1.2, 0.7, -0.4});
  ds.labels = {1};
  MaskFn mask = MaskFn::fixed_reference(Tensor::zeros({n}));
  std::vector<double> fr = default_fractions();

  MetricResult kpm = keep_positive_mask(net, ds, xg_fn(), "xg", mask, fr);

  // oracle: enumerate every ordering of the progressive (non-negative) set
  const Tensor x = ds.sample(0);
  Attribution contrib = x_gradient(net, x, 0);
  std::vector<int64_t> progressive, always;
  for (int64_t i = 0; i < n; ++i)
    (contrib.values[i] < 0.0 ? always : progressive).push_back(i);
  std::sort(progressive.begin(), progressive.end());
  double best = -1e300;
  std::vector<int64_t> order = progressive;
  do {
    std::vector<std::pair<double, double>> curve;
    for (double f : fr) {
      const int64_t take = std::llround(f * static_cast<double>(order.size()));
      std::vector<int64_t> masked = always;
      masked.insert(masked.end(), order.begin(), order.begin() + take);
      curve.emplace_back(f, predict(net, mask.apply(x, masked))[0]);
    }
    best = std::max(best, trapezoid_auc(curve));
  } while (std::next_permutation(order.begin(), order.end()));
  CHECK(kpm.auc == doctest::Approx(best).epsilon(1e-12));
}
