#pragma once

#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xgrad/graph.hpp"
#include "xgrad/network.hpp"
#include "xgrad/rng.hpp"

namespace xgrad {

enum class MethodKind {
  Gradient,
  InputXGradient,
  XGradient,
  IntegratedGradients,
  ExpectedGradients,
  Rrr,
  ClosedFormDegreeK,
  Random,
};

inline std::string method_name(MethodKind m) {
  switch (m) {
    case MethodKind::Gradient: return "grad";
    case MethodKind::InputXGradient: return "ixg";
    case MethodKind::XGradient: return "xg";
    case MethodKind::IntegratedGradients: return "ig";
    case MethodKind::ExpectedGradients: return "eg";
    case MethodKind::Rrr: return "rrr";
    case MethodKind::ClosedFormDegreeK: return "cfk";
    case MethodKind::Random: return "random";
  }
  return "?";
}

/// Refusal to attribute a non-homogeneous network with a method whose axioms
/// require nonnegative homogeneity. Carries the violating layers.
class HomogeneityError : public Error {
 public:
  std::vector<std::string> reasons;
  explicit HomogeneityError(const std::vector<std::string>& r)
      : Error(compose(r)), reasons(r) {}

 private:
  static std::string compose(const std::vector<std::string>& r) {
    std::string msg = "x-gradient is only defined for nonnegatively homogeneous networks;";
    for (const auto& s : r) msg += " " + s + ";";
    return msg;
  }
};

/// Per-feature contribution vector for one model output.
struct Attribution {
  Tensor values;            // shape [n]
  MethodKind method = MethodKind::Gradient;
  Tensor baseline;          // empty for gradient-family methods
  int64_t target = 0;
  int64_t steps_or_samples = 1;
};

// ---------------------------------------------------------------------------
// core gradient machinery (one code path for standalone and in-training use)

/// Differentiable [n,S] node holding per-column input gradients of the
/// per-column target logits of `X`. Column independence makes the batched
/// backward identical to S single-sample passes.
inline Value batch_gradient_node(Graph& g, const BoundNetwork& bnet, Value X,
                                 const std::vector<int64_t>& targets) {
  const Tensor& xv = g.value(X);
  const int64_t S = xv.shape[1];
  if (static_cast<int64_t>(targets.size()) != S)
    throw ShapeError("batch_gradient_node: need one target per column");
  Value Y = bnet.apply_batch(X);
  const int64_t odim = g.value(Y).shape[0];
  std::vector<int64_t> pick(static_cast<size_t>(S));
  for (int64_t s = 0; s < S; ++s) {
    if (targets[static_cast<size_t>(s)] < 0 || targets[static_cast<size_t>(s)] >= odim)
      throw ValueError("target index " + std::to_string(targets[static_cast<size_t>(s)]) +
                       " out of range for output dim " + std::to_string(odim));
    pick[static_cast<size_t>(s)] = targets[static_cast<size_t>(s)] * S + s;
  }
  Value total = g.sum(g.gather(Y, std::move(pick), {S}));
  return g.gradient(total, std::span<const Value>(&X, 1), 2)[0];
}

/// X-Gradient as a differentiable node: x (.) dF/dx per column.
inline Value batch_x_gradient_node(Graph& g, const BoundNetwork& bnet, Value X,
                                   const std::vector<int64_t>& targets) {
  return g.mul(X, batch_gradient_node(g, bnet, X, targets));
}

/// Eager per-column input gradients at the given points (columns of [n,S]).
inline Tensor batch_input_gradients(const Network& net, const Tensor& points,
                                    const std::vector<int64_t>& targets) {
  Graph g;
  BoundNetwork b = bind(g, net);
  Value X = g.leaf(points);
  return g.value(batch_gradient_node(g, b, X, targets));
}

inline Tensor input_gradient(const Network& net, const Tensor& x, int64_t target) {
  Tensor pts({net.spec.input_dim, 1}, x.data);
  Tensor G = batch_input_gradients(net, pts, {target});
  return Tensor({net.spec.input_dim}, std::move(G.data));
}

// ---------------------------------------------------------------------------
// attribution methods

inline Attribution grad_attr(const Network& net, const Tensor& x, int64_t target) {
  Attribution a;
  a.values = input_gradient(net, x, target);
  a.method = MethodKind::Gradient;
  a.target = target;
  return a;
}

inline Attribution input_x_grad(const Network& net, const Tensor& x, int64_t target) {
  Attribution a;
  a.values = input_gradient(net, x, target);
  for (int64_t i = 0; i < x.size(); ++i) a.values[i] *= x[i];
  a.method = MethodKind::InputXGradient;
  a.target = target;
  return a;
}

/// Closed-form axiomatic attribution relative to the zero baseline; defined
/// only for nonnegatively homogeneous networks and refused otherwise.
inline Attribution x_gradient(const Network& net, const Tensor& x, int64_t target) {
  HomogeneityReport rep = classify_homogeneity(net.spec);
  if (!rep.homogeneous) throw HomogeneityError(rep.reasons);
  Attribution a = input_x_grad(net, x, target);
  a.method = MethodKind::XGradient;
  a.baseline = Tensor::zeros(x.shape);
  return a;
}

/// Closed-form attribution for a whole batch of inputs through one batched
/// gradient pass (columns of a single graph); the per-input amortized cost is
/// a fraction of per-call attribution.
inline std::vector<Attribution> x_gradient_batch(const Network& net,
                                                 const std::vector<Tensor>& inputs,
                                                 int64_t target, int64_t chunk = 512) {
  HomogeneityReport rep = classify_homogeneity(net.spec);
  if (!rep.homogeneous) throw HomogeneityError(rep.reasons);
  const int64_t n = net.spec.input_dim;
  const int64_t total = static_cast<int64_t>(inputs.size());
  std::vector<Attribution> out(inputs.size());
  for (int64_t s0 = 0; s0 < total; s0 += chunk) {
    const int64_t S = std::min(chunk, total - s0);
    Tensor pts = Tensor::zeros({n, S});
    for (int64_t s = 0; s < S; ++s)
      for (int64_t i = 0; i < n; ++i) pts.at(i, s) = inputs[static_cast<size_t>(s0 + s)][i];
    Tensor G = batch_input_gradients(net, pts, std::vector<int64_t>(static_cast<size_t>(S), target));
    for (int64_t s = 0; s < S; ++s) {
      Attribution& a = out[static_cast<size_t>(s0 + s)];
      a.values = Tensor::zeros({n});
      for (int64_t i = 0; i < n; ++i)
        a.values[i] = inputs[static_cast<size_t>(s0 + s)][i] * G.at(i, s);
      a.method = MethodKind::XGradient;
      a.baseline = Tensor::zeros({n});
      a.target = target;
    }
  }
  return out;
}

/// Midpoint-rule Riemann approximation of the straight-line path integral
/// from `baseline` to `x`. Batched: interpolation points are columns of one
/// graph, processed in chunks.
inline Attribution integrated_gradients(const Network& net, const Tensor& x,
                                        const Tensor& baseline, int64_t steps, int64_t target = 0,
                                        int64_t chunk = 512) {
  if (steps < 1) throw ValueError("integrated_gradients: steps must be >= 1");
  if (!baseline.same_shape(x))
    throw ShapeError("integrated_gradients: baseline shape " + shape_str(baseline.shape) +
                     " != input shape " + shape_str(x.shape));
  const int64_t n = x.size();
  std::vector<double> grad_sum(static_cast<size_t>(n), 0.0);
  for (int64_t s0 = 0; s0 < steps; s0 += chunk) {
    const int64_t S = std::min(chunk, steps - s0);
    Tensor pts = Tensor::zeros({n, S});
    for (int64_t s = 0; s < S; ++s) {
      const double alpha = (static_cast<double>(s0 + s) + 0.5) / static_cast<double>(steps);
      for (int64_t i = 0; i < n; ++i)
        pts.at(i, s) = baseline[i] + alpha * (x[i] - baseline[i]);
    }
    Tensor G = batch_input_gradients(net, pts, std::vector<int64_t>(static_cast<size_t>(S), target));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t s = 0; s < S; ++s) grad_sum[static_cast<size_t>(i)] += G.at(i, s);
  }
  Attribution a;
  a.values = Tensor::zeros({n});
  for (int64_t i = 0; i < n; ++i)
    a.values[i] = (x[i] - baseline[i]) * grad_sum[static_cast<size_t>(i)] / static_cast<double>(steps);
  a.method = MethodKind::IntegratedGradients;
  a.baseline = baseline;
  a.target = target;
  a.steps_or_samples = steps;
  return a;
}

/// Expected Gradients with caller-supplied interpolation positions (one per
/// reference). The seeded overload below draws them uniform(0,1).
inline Attribution expected_gradients_with_alphas(const Network& net, const Tensor& x,
                                                  const std::vector<Tensor>& references,
                                                  const std::vector<double>& alphas,
                                                  int64_t target = 0, int64_t chunk = 512) {
  if (references.empty()) throw ValueError("expected_gradients: reference set is empty");
  if (references.size() != alphas.size())
    throw ValueError("expected_gradients: need one alpha per reference");
  const int64_t n = x.size();
  for (const Tensor& r : references)
    if (!r.same_shape(x)) throw ShapeError("expected_gradients: reference shape mismatch");
  const int64_t K = static_cast<int64_t>(references.size());
  std::vector<double> acc(static_cast<size_t>(n), 0.0);
  for (int64_t k0 = 0; k0 < K; k0 += chunk) {
    const int64_t S = std::min(chunk, K - k0);
    Tensor pts = Tensor::zeros({n, S});
    for (int64_t s = 0; s < S; ++s) {
      const Tensor& r = references[static_cast<size_t>(k0 + s)];
      const double alpha = alphas[static_cast<size_t>(k0 + s)];
      for (int64_t i = 0; i < n; ++i) pts.at(i, s) = r[i] + alpha * (x[i] - r[i]);
    }
    Tensor G = batch_input_gradients(net, pts, std::vector<int64_t>(static_cast<size_t>(S), target));
    for (int64_t s = 0; s < S; ++s) {
      const Tensor& r = references[static_cast<size_t>(k0 + s)];
      for (int64_t i = 0; i < n; ++i) acc[static_cast<size_t>(i)] += (x[i] - r[i]) * G.at(i, s);
    }
  }
  Attribution a;
  a.values = Tensor::zeros({n});
  for (int64_t i = 0; i < n; ++i) a.values[i] = acc[static_cast<size_t>(i)] / static_cast<double>(K);
  a.method = MethodKind::ExpectedGradients;
  a.target = target;
  a.steps_or_samples = K;
  return a;
}

inline Attribution expected_gradients(const Network& net, const Tensor& x,
                                      const std::vector<Tensor>& references, uint64_t seed,
                                      int64_t target = 0) {
  Rng rng(derive_seed(seed, "eg-alpha"));
  std::vector<double> alphas(references.size());
  for (double& a : alphas) a = rng.uniform();
  return expected_gradients_with_alphas(net, x, references, alphas, target);
}

/// 1/k * x (.) dF/dx for functions that are strictly positive homogeneous of
/// degree k (probed dynamically before attributing).
using ScalarFn = std::function<Value(Graph&, Value)>;

inline ScalarFn network_scalar_fn(Network net, int64_t target) {
  return [net = std::move(net), target](Graph& g, Value x) {
    return bind(g, net).apply_scalar(x, target);
  };
}

inline double eval_scalar_fn(const ScalarFn& f, const Tensor& x) {
  Graph g;
  return g.value(f(g, g.leaf(x))).scalar_value();
}

inline Tensor scalar_fn_gradient(const ScalarFn& f, const Tensor& x) {
  Graph g;
  Value xi = g.leaf(x);
  Value out = f(g, xi);
  return g.value(g.gradient(out, std::span<const Value>(&xi, 1))[0]);
}

inline Attribution closed_form_ig_degree_k(const ScalarFn& f, const Tensor& x, double k) {
  if (k < 1.0) throw ValueError("closed_form_ig_degree_k: k must be >= 1");
  // homogeneity probe: |F(a x) - a^k F(x)| relative error <= 1e-6 at 8 alphas
  static const double probe_alphas[8] = {0.13, 0.29, 0.52, 0.77, 1.21, 1.73, 2.41, 3.16};
  const double fx = eval_scalar_fn(f, x);
  for (double alpha : probe_alphas) {
    Tensor ax = x;
    for (double& v : ax.data) v *= alpha;
    const double lhs = eval_scalar_fn(f, ax);
    const double rhs = std::pow(alpha, k) * fx;
    const double err = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-12});
    if (err > 1e-6)
      throw ValueError("closed_form_ig_degree_k: function is not positive homogeneous of degree " +
                       std::to_string(k) + " (relative error " + std::to_string(err) +
                       " at alpha=" + std::to_string(alpha) + ")");
  }
  Tensor grad = scalar_fn_gradient(f, x);
  Attribution a;
  a.values = Tensor::zeros(x.shape);
  for (int64_t i = 0; i < x.size(); ++i) a.values[i] = x[i] * grad[i] / k;
  a.method = MethodKind::ClosedFormDegreeK;
  a.baseline = Tensor::zeros(x.shape);
  return a;
}

inline Attribution closed_form_ig_degree_k(const Network& net, const Tensor& x, int64_t target,
                                           double k) {
  Attribution a = closed_form_ig_degree_k(network_scalar_fn(net, target), x, k);
  a.target = target;
  return a;
}

/// Midpoint-rule IG for an arbitrary scalar function (per-step loop).
inline Attribution integrated_gradients(const ScalarFn& f, const Tensor& x, const Tensor& baseline,
                                        int64_t steps) {
  if (steps < 1) throw ValueError("integrated_gradients: steps must be >= 1");
  if (!baseline.same_shape(x)) throw ShapeError("integrated_gradients: baseline shape mismatch");
  const int64_t n = x.size();
  std::vector<double> grad_sum(static_cast<size_t>(n), 0.0);
  for (int64_t s = 0; s < steps; ++s) {
    const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
    Tensor p = Tensor::zeros(x.shape);
    for (int64_t i = 0; i < n; ++i) p[i] = baseline[i] + alpha * (x[i] - baseline[i]);
    Tensor G = scalar_fn_gradient(f, p);
    for (int64_t i = 0; i < n; ++i) grad_sum[static_cast<size_t>(i)] += G[i];
  }
  Attribution a;
  a.values = Tensor::zeros(x.shape);
  for (int64_t i = 0; i < n; ++i)
    a.values[i] = (x[i] - baseline[i]) * grad_sum[static_cast<size_t>(i)] / static_cast<double>(steps);
  a.method = MethodKind::IntegratedGradients;
  a.baseline = baseline;
  a.steps_or_samples = steps;
  return a;
}

/// Input gradient of the log of the target logit. Demands a positive logit;
/// `stabilized` switches to log(F + 1e-6).
inline Attribution rrr_attr(const Network& net, const Tensor& x, int64_t target,
                            bool stabilized = false) {
  constexpr double kEps = 1e-6;
  Graph g;
  BoundNetwork b = bind(g, net);
  Value xi = g.leaf(x);
  Value logit = b.apply_scalar(xi, target);
  const double f = g.value(logit).scalar_value();
  if (!stabilized && f <= 0.0)
    throw ValueError("rrr_attr: target logit " + std::to_string(f) +
                     " is not positive; use the stabilized log(F + 1e-6) form");
  Value obj = g.log(stabilized ? g.add_const(logit, kEps) : logit);
  Attribution a;
  a.values = g.value(g.gradient(obj, std::span<const Value>(&xi, 1), 2)[0]);
  a.method = MethodKind::Rrr;
  a.target = target;
  return a;
}

/// Seed-reproducible uniform(-1,1) attribution; the benchmark floor.
inline Attribution random_attr(const Tensor& x, uint64_t seed) {
  Rng rng(derive_seed(seed, "random-attr"));
  Attribution a;
  a.values = Tensor::zeros(x.shape);
  for (double& v : a.values.data) v = rng.uniform(-1.0, 1.0);
  a.method = MethodKind::Random;
  return a;
}

// ---------------------------------------------------------------------------
// attribution-difference measure

struct RelDiffResult {
  double value = 0.0;
  int64_t skipped = 0;   // |reference term| < epsilon, excluded from the mean
  int64_t compared = 0;
};

/// Mean over samples and features of |ref_i - other_i| / |ref_i| with the
/// first list in the reference (IG) role; near-zero denominators are skipped
/// and counted.
inline RelDiffResult mean_abs_rel_diff(std::span<const Attribution> reference,
                                       std::span<const Attribution> other,
                                       double epsilon = 1e-12) {
  if (reference.size() != other.size())
    throw ShapeError("mean_abs_rel_diff: lists have different lengths");
  RelDiffResult r;
  double acc = 0.0;
  for (size_t s = 0; s < reference.size(); ++s) {
    const Tensor& a = reference[s].values;
    const Tensor& b = other[s].values;
    if (!a.same_shape(b)) throw ShapeError("mean_abs_rel_diff: attribution shape mismatch");
    for (int64_t i = 0; i < a.size(); ++i) {
      if (std::abs(a[i]) < epsilon) {
        ++r.skipped;
        continue;
      }
      acc += std::abs(a[i] - b[i]) / std::abs(a[i]);
      ++r.compared;
    }
  }
  r.value = r.compared > 0 ? acc / static_cast<double>(r.compared) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// persistence

inline void write_attributions_csv(const std::string& path, std::span<const Attribution> attrs,
                                   const std::vector<std::string>& feature_names = {}) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot open " + path + " for writing");
  out << "id,method,target";
  if (!attrs.empty())
    for (int64_t i = 0; i < attrs.front().values.size(); ++i) {
      out << ',';
      if (static_cast<size_t>(i) < feature_names.size())
        out << feature_names[static_cast<size_t>(i)];
      else
        out << 'f' << i;
    }
  out << '\n';
  out.precision(17);
  for (size_t s = 0; s < attrs.size(); ++s) {
    out << s << ',' << method_name(attrs[s].method) << ',' << attrs[s].target;
    for (double v : attrs[s].values.data) out << ',' << v;
    out << '\n';
  }
}

inline nlohmann::json attribution_to_json(const Attribution& a) {
  nlohmann::json j;
  j["method"] = method_name(a.method);
  j["target"] = a.target;
  j["steps-or-samples"] = a.steps_or_samples;
  j["values"] = a.values.data;
  if (a.baseline.size() > 0) j["baseline"] = a.baseline.data;
  return j;
}

}  // namespace xgrad
