#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "xgrad/attribution.hpp"
#include "xgrad/axioms.hpp"
#include "xgrad/rng.hpp"

using namespace xgrad;

namespace {

Network linear_net(std::vector<double> w) {
  const int64_t n = static_cast<int64_t>(w.size());
  Network net;
  net.spec = make_mlp(n, {}, 1, false);
  net.params.emplace("layer0.weight", Tensor({1, n}, std::move(w)));
  return net;
}

Tensor random_input(Rng& rng, int64_t n) {
  Tensor x = Tensor::zeros({n});
  for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
  return x;
}

double sum_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v;
  return s;
}

}  // namespace

TEST_CASE("grad_attr: linear, saturated, constant-zero") {
  Network lin = linear_net({2, -1});
  Attribution a = grad_attr(lin, Tensor::vec({3, 5}), 0);
  CHECK(a.values.data == std::vector<double>{2, -1});
  a = grad_attr(lin, Tensor::vec({-7, 0.25}), 0);
  CHECK(a.values.data == std::vector<double>{2, -1});

  Network ce = saturating_counterexample();
  CHECK(predict(ce, Tensor::vec({2.0}))[0] == 1.0);
  CHECK(predict(ce, Tensor::vec({0.0}))[0] == 0.0);
  CHECK(grad_attr(ce, Tensor::vec({2.0}), 0).values[0] == 0.0);

  Network zero = linear_net({0, 0, 0});
  CHECK(grad_attr(zero, Tensor::vec({1, 2, 3}), 0).values.data == std::vector<double>{0, 0, 0});
}

TEST_CASE("input_x_grad: weighting by the input") {
  Network lin = linear_net({2, -1});
  CHECK(input_x_grad(lin, Tensor::vec({3, 5}), 0).values.data == std::vector<double>{6, -5});
  CHECK(input_x_grad(saturating_counterexample(), Tensor::vec({2.0}), 0).values[0] == 0.0);
  CHECK(input_x_grad(lin, Tensor::zeros({2}), 0).values.data == std::vector<double>{0, 0});
}

TEST_CASE("x_gradient: completeness is exact and equals the linear case") {
  Network lin = linear_net({2, -1});
  Attribution a = x_gradient(lin, Tensor::vec({3, 5}), 0);
  CHECK(a.values.data == std::vector<double>{6, -5});
  CHECK(sum_of(a.values) == doctest::Approx(1.0));
  CHECK(a.method == MethodKind::XGradient);
  CHECK(a.baseline.data == std::vector<double>{0, 0});

  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Network net = init(make_mlp(6, {12, 9}, 1, false), rng.next_u64());
    Tensor x = random_input(rng, 6);
    Attribution xa = x_gradient(net, x, 0);
    const double fx = predict(net, x)[0];
    CHECK(sum_of(xa.values) == doctest::Approx(fx).epsilon(1e-12));
  }
}

TEST_CASE("x_gradient refuses non-homogeneous networks, naming the layers") {
  Network biased = init(make_mlp(4, {5}, 1, true), 11);
  try {
    x_gradient(biased, Tensor::vec({1, 2, 3, 4}), 0);
    FAIL("expected HomogeneityError");
  } catch (const HomogeneityError& e) {
    REQUIRE(e.reasons.size() == 2);
    CHECK(e.reasons[0] == "bias at layer 0");
    CHECK(std::string(e.what()).find("bias at layer 0") != std::string::npos);
  }
}

TEST_CASE("x_gradient matches a fine-Riemann integrated-gradients oracle") {
  Rng rng(8);
  std::vector<Attribution> oracle, fast;
  for (int trial = 0; trial < 5; ++trial) {
    Network net = init(make_mlp(5, {10, 8}, 1, false), rng.next_u64());
    Tensor x = random_input(rng, 5);
    fast.push_back(x_gradient(net, x, 0));
    oracle.push_back(integrated_gradients(net, x, Tensor::zeros({5}), 10000));
  }
  RelDiffResult d = mean_abs_rel_diff(oracle, fast);
  CHECK(d.value < 1e-3);
}

TEST_CASE("x_gradient is nonnegatively homogeneous") {
  Rng rng(13);
  Network net = init(make_mlp(4, {7}, 1, false), 99);
  Tensor x = random_input(rng, 4);
  Attribution base = x_gradient(net, x, 0);
  for (double alpha : {0.0, 0.3, 2.7}) {
    Tensor ax = x;
    for (double& v : ax.data) v *= alpha;
    Attribution scaled = x_gradient(net, ax, 0);
    for (int64_t i = 0; i < 4; ++i)
      CHECK(scaled.values[i] == doctest::Approx(alpha * base.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("closed_form_ig_degree_k on x^2, xy, and a squared network output") {
  ScalarFn square = [](Graph& g, Value x) { return g.sum(g.mul(x, x)); };
  Attribution a = closed_form_ig_degree_k(square, Tensor::vec({3.0}), 2.0);
  CHECK(a.values[0] == doctest::Approx(9.0));  // F(3) - F(0) = 9

  ScalarFn product = [](Graph& g, Value x) {
    return g.sum(g.mul(g.gather(x, {0}, {1}), g.gather(x, {1}, {1})));
  };
  Attribution axy = closed_form_ig_degree_k(product, Tensor::vec({2.0, 3.0}), 2.0);
  CHECK(axy.values[0] == doctest::Approx(3.0));
  CHECK(axy.values[1] == doctest::Approx(3.0));
  // fine-Riemann oracle confirms the equal split
  Attribution ig = integrated_gradients(product, Tensor::vec({2.0, 3.0}), Tensor::zeros({2}), 10000);
  CHECK(ig.values[0] == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(ig.values[1] == doctest::Approx(3.0).epsilon(1e-6));

  // k=1 reduces to x_gradient
  Rng rng(5);
  Network net = init(make_mlp(4, {6}, 1, false), 17);
  Tensor x = random_input(rng, 4);
  Attribution cf = closed_form_ig_degree_k(net, x, 0, 1.0);
  Attribution xg = x_gradient(net, x, 0);
  for (int64_t i = 0; i < 4; ++i) CHECK(cf.values[i] == doctest::Approx(xg.values[i]));
}

TEST_CASE("closed_form_ig_degree_k refuses non-homogeneous functions") {
  ScalarFn shifted = [](Graph& g, Value x) { return g.add_const(g.sum(g.mul(x, x)), 1.0); };
  CHECK_THROWS_AS(closed_form_ig_degree_k(shifted, Tensor::vec({3.0}), 2.0), ValueError);
  CHECK_THROWS_AS(closed_form_ig_degree_k(shifted, Tensor::vec({3.0}), 0.5), ValueError);
}

TEST_CASE("integrated_gradients: saturation counterexample resolves to ~1") {
  Network ce = saturating_counterexample();
  Attribution a = integrated_gradients(ce, Tensor::vec({2.0}), Tensor::zeros({1}), 128);
  CHECK(a.values[0] == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("integrated_gradients: exact for linear models at any step count") {
  Network lin = linear_net({1.5, -2.0, 0.5});
  Tensor x = Tensor::vec({2.0, 1.0, -3.0});
  Tensor baseline = Tensor::vec({0.5, 0.5, 0.5});
  for (int64_t steps : {1, 3, 17}) {
    Attribution a = integrated_gradients(lin, x, baseline, steps);
    CHECK(a.values[0] == doctest::Approx(1.5 * (2.0 - 0.5)));
    CHECK(a.values[1] == doctest::Approx(-2.0 * (1.0 - 0.5)));
    CHECK(a.values[2] == doctest::Approx(0.5 * (-3.0 - 0.5)));
  }
  CHECK_THROWS_AS(integrated_gradients(lin, x, Tensor::zeros({2}), 8), ShapeError);
  CHECK_THROWS_AS(integrated_gradients(lin, x, baseline, 0), ValueError);
}

TEST_CASE("integrated_gradients: batched network path equals the generic loop") {
  Rng rng(21);
  Network net = random_network(make_mlp(5, {7}, 2, true), 33);
  Tensor x = random_input(rng, 5);
  Tensor baseline = random_input(rng, 5);
  Attribution batched = integrated_gradients(net, x, baseline, 37, 1, /*chunk=*/8);
  Attribution looped = integrated_gradients(network_scalar_fn(net, 1), x, baseline, 37);
  for (int64_t i = 0; i < 5; ++i)
    CHECK(batched.values[i] == doctest::Approx(looped.values[i]).epsilon(1e-12));
}

TEST_CASE("integrated_gradients: step sweep converges monotonically to the oracle") {
  Rng rng(55);
  Network net = random_network(make_mlp(6, {8, 8}, 1, true), 60);
  const int64_t n_inputs = 40;
  std::vector<Tensor> xs, oracles;
  for (int64_t i = 0; i < n_inputs; ++i) {
    xs.push_back(random_input(rng, 6));
    oracles.push_back(integrated_gradients(net, xs.back(), Tensor::zeros({6}), 10000).values);
  }
  std::vector<double> mean_diff;
  for (int64_t steps : {1, 2, 4, 8, 16, 32, 64, 128, 256}) {
    double acc = 0.0;
    for (int64_t i = 0; i < n_inputs; ++i) {
      Attribution a = integrated_gradients(net, xs[static_cast<size_t>(i)], Tensor::zeros({6}), steps);
      acc += max_abs_diff(a.values, oracles[static_cast<size_t>(i)]);
    }
    mean_diff.push_back(acc / static_cast<double>(n_inputs));
  }
  for (size_t i = 1; i < mean_diff.size(); ++i) CHECK(mean_diff[i] <= mean_diff[i - 1]);
}

TEST_CASE("expected_gradients: degenerate draws") {
  Rng rng(71);
  Network net = random_network(make_mlp(4, {6}, 1, true), 72);
  Tensor x = random_input(rng, 4);
  // single zero reference with alpha forced to 1 equals input x gradient
  Attribution eg = expected_gradients_with_alphas(net, x, {Tensor::zeros({4})}, {1.0});
  Attribution ixg = input_x_grad(net, x, 0);
  CHECK(eg.values.data == ixg.values.data);
  // references equal to x give zero attribution
  Attribution zero = expected_gradients(net, x, {x, x, x}, 7);
  CHECK(zero.values.data == std::vector<double>{0, 0, 0, 0});
  CHECK_THROWS_AS(expected_gradients(net, x, {}, 7), ValueError);
}

TEST_CASE("expected_gradients: deterministic under seed") {
  Rng rng(81);
  Network net = random_network(make_mlp(4, {16}, 1, true), 82);
  for (auto& [name, t] : net.params)
    for (double& v : t.data) v *= 3.0;  // steep: every path segment crosses kinks
  Tensor x = random_input(rng, 4);
  std::vector<Tensor> refs;
  for (int i = 0; i < 6; ++i) refs.push_back(random_input(rng, 4));
  Attribution a1 = expected_gradients(net, x, refs, 1234);
  Attribution a2 = expected_gradients(net, x, refs, 1234);
  Attribution a3 = expected_gradients(net, x, refs, 1235);
  CHECK(a1.values.data == a2.values.data);
  CHECK(a1.values.data != a3.values.data);
}

TEST_CASE("expected_gradients: error shrinks with the reference count") {
  Rng rng(91);
  Network net = random_network(make_mlp(4, {7}, 1, true), 92);
  Tensor x = random_input(rng, 4);
  std::vector<Tensor> pool;
  for (int i = 0; i < 48; ++i) pool.push_back(random_input(rng, 4));
  // converged oracle: fine IG averaged over the whole reference pool
  Tensor target = Tensor::zeros({4});
  for (const Tensor& r : pool) {
    Attribution ig = integrated_gradients(net, x, r, 1000);
    for (int64_t i = 0; i < 4; ++i) target[i] += ig.values[i] / static_cast<double>(pool.size());
  }
  std::vector<double> err;
  for (int64_t k : {1, 8, 64}) {
    double acc = 0.0;
    const int repeats = 24;
    for (int rep = 0; rep < repeats; ++rep) {
      Rng pick(derive_seed(4000, "pick", static_cast<uint64_t>(k), static_cast<uint64_t>(rep)));
      std::vector<Tensor> refs;
      for (int64_t j = 0; j < k; ++j) refs.push_back(pool[static_cast<size_t>(pick.below(48))]);
      Attribution eg = expected_gradients(net, x, refs, pick.next_u64());
      acc += max_abs_diff(eg.values, target);
    }
    err.push_back(acc / 24.0);
  }
  CHECK(err[1] < err[0]);
  CHECK(err[2] < err[1]);
}

TEST_CASE("rrr_attr: log-gradient with scale invariance") {
  // constant network F = e: dense weight 0 with bias e
  Network cnet;
  cnet.spec = make_mlp(1, {}, 1, true);
  cnet.params.emplace("layer0.weight", Tensor::matrix(1, 1, {0.0}));
  cnet.params.emplace("layer0.bias", Tensor::vec({M_E}));
  CHECK(rrr_attr(cnet, Tensor::vec({4.0}), 0).values[0] == 0.0);

  Network lin = linear_net({2.0});
  Attribution a = rrr_attr(lin, Tensor::vec({3.0}), 0);
  CHECK(a.values[0] == doctest::Approx(1.0 / 3.0));
  // scaling F by c > 0 leaves the attribution unchanged
  Network scaled = linear_net({10.0});
  CHECK(rrr_attr(scaled, Tensor::vec({3.0}), 0).values[0] == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_WITH_AS(rrr_attr(lin, Tensor::vec({-1.0}), 0), doctest::Contains("stabilized"),
                       ValueError);
  Attribution st = rrr_attr(lin, Tensor::vec({-1.0}), 0, true);
  CHECK(st.values[0] == doctest::Approx(2.0 / (-2.0 + 1e-6)));
}

TEST_CASE("mean_abs_rel_diff: identity, Table-2-style ordering, and skip counting") {
  Rng rng(101);
  Network hom = init(make_mlp(5, {16, 12}, 1, false), 102);
  std::vector<Attribution> ig_list, xg_list, ixg_biased, ig_biased;
  for (int i = 0; i < 30; ++i) {
    Tensor x = random_input(rng, 5);
    ig_list.push_back(integrated_gradients(hom, x, Tensor::zeros({5}), 128));
    xg_list.push_back(x_gradient(hom, x, 0));
  }
  CHECK(mean_abs_rel_diff(ig_list, ig_list).value == 0.0);
  RelDiffResult xdnn = mean_abs_rel_diff(ig_list, xg_list);
  CHECK(xdnn.value < 0.02);

  Network biased = random_network(make_mlp(5, {16, 12}, 1, true), 103);
  for (int i = 0; i < 30; ++i) {
    Tensor x = random_input(rng, 5);
    ig_biased.push_back(integrated_gradients(biased, x, Tensor::zeros({5}), 128));
    ixg_biased.push_back(input_x_grad(biased, x, 0));
  }
  RelDiffResult regular = mean_abs_rel_diff(ig_biased, ixg_biased);
  CHECK(regular.value > 10.0 * xdnn.value);

  Attribution za;
  za.values = Tensor::vec({0.0, 1.0});
  Attribution zb;
  zb.values = Tensor::vec({5.0, 2.0});
  RelDiffResult skip = mean_abs_rel_diff(std::vector<Attribution>{za}, std::vector<Attribution>{zb});
  CHECK(skip.skipped == 1);
  CHECK(skip.compared == 1);
  CHECK(skip.value == doctest::Approx(1.0));
}

TEST_CASE("random_attr is seed-reproducible") {
  Tensor x = Tensor::zeros({6});
  CHECK(random_attr(x, 5).values.data == random_attr(x, 5).values.data);
  CHECK(random_attr(x, 5).values.data != random_attr(x, 6).values.data);
}

TEST_CASE("attribution csv output") {
  Network lin = linear_net({2, -1});
  std::vector<Attribution> attrs = {input_x_grad(lin, Tensor::vec({3, 5}), 0)};
  const std::string path = "attr_out.csv";
  write_attributions_csv(path, attrs, {"age", "weight"});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "id,method,target,age,weight");
  CHECK(row == "0,ixg,0,6,-5");
  std::remove(path.c_str());
}

TEST_CASE("x_gradient_batch equals per-call x_gradient bitwise") {
  Rng rng(121);
  Network net = init(make_mlp(6, {10, 8}, 1, false), 122);
  std::vector<Tensor> inputs;
  for (int i = 0; i < 9; ++i) inputs.push_back(random_input(rng, 6));
  std::vector<Attribution> batched = x_gradient_batch(net, inputs, 0, /*chunk=*/4);
  REQUIRE(batched.size() == inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    Attribution single = x_gradient(net, inputs[i], 0);
    CHECK(batched[i].values.data == single.values.data);
  }
  Network biased = init(make_mlp(6, {4}, 1, true), 123);
  CHECK_THROWS_AS(x_gradient_batch(biased, inputs, 0), HomogeneityError);
}

TEST_CASE("transposed matmul variants agree with explicit transposes") {
  Rng rng(131);
  Graph g;
  Tensor av = Tensor::zeros({4, 3}), bv = Tensor::zeros({4, 5}), cv = Tensor::zeros({6, 3});
  for (double& v : av.data) v = rng.normal();
  for (double& v : bv.data) v = rng.normal();
  for (double& v : cv.data) v = rng.normal();
  Value A = g.leaf(av), B = g.leaf(bv), C = g.leaf(cv);
  CHECK(max_abs_diff(g.value(g.matmul_ta(A, B)), g.value(g.matmul(g.transpose(A), B))) == 0.0);
  Value bt = g.matmul_bt(A, C);  // A C^T -> [4,6]
  CHECK(max_abs_diff(g.value(bt), g.value(g.matmul(A, g.transpose(C)))) == 0.0);
  // gradients through both variants check out against finite differences
  Value f = g.sum(g.mul(g.matmul_ta(A, B), g.matmul_ta(A, B)));
  CHECK(g.gradient_check(f, A, 1e-6) < 1e-6);
  CHECK(g.gradient_check(f, B, 1e-6) < 1e-6);
  Value f2 = g.sum(g.mul(bt, bt));
  CHECK(g.gradient_check(f2, A, 1e-6) < 1e-6);
  CHECK(g.gradient_check(f2, C, 1e-6) < 1e-6);
  // 1-d right-hand side
  Value v1 = g.leaf(Tensor::vec({0.5, -1.0, 2.0, 0.25}));
  Value f3 = g.sum(g.mul(g.matmul_ta(A, v1), g.matmul_ta(A, v1)));
  CHECK(g.gradient_check(f3, A, 1e-6) < 1e-6);
  CHECK(g.gradient_check(f3, v1, 1e-6) < 1e-6);
}
