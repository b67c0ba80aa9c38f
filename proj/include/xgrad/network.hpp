#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xgrad/graph.hpp"
#include "xgrad/rng.hpp"
#include "xgrad/tensor.hpp"

namespace xgrad {

enum class LayerKind { Dense, Conv1d, Activation, Pooling, SkipMerge };
enum class ActivationKind { Identity, Relu, LeakyRelu, PRelu };
enum class PoolingKind { Identity, Max, Min, Average, GlobalAverage };

// The representable activation/pooling families are exactly the two-interval
// piecewise-linear activations and linear / relative-ordering poolings; other
// nonlinearities are unrepresentable by construction.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  Shape weight_shape;        // dense: {out,in}; conv1d: {channels,kernel}
  bool has_bias = false;
  ActivationKind activation = ActivationKind::Relu;
  double fixed_slope = 0.01;  // LeakyRelu negative-side slope
  PoolingKind pooling = PoolingKind::Max;
  int64_t pool_window = 2;
  int64_t stride = 1;     // conv1d
  int64_t skip_from = -1;  // SkipMerge: add the output of this earlier layer
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  int64_t input_dim = 0;
  int64_t output_dim = 0;

  /// Output width after each layer; throws ValueError if shapes do not compose.
  std::vector<int64_t> layer_dims() const {
    if (input_dim <= 0) throw ValueError("network spec: input_dim must be positive");
    if (output_dim <= 0) throw ValueError("network spec: output_dim must be positive");
    std::vector<int64_t> dims;
    int64_t cur = input_dim;
    bool spatial_done = false;
    for (size_t li = 0; li < layers.size(); ++li) {
      const LayerSpec& l = layers[li];
      const std::string where = "layer " + std::to_string(li);
      switch (l.kind) {
        case LayerKind::Dense:
          if (l.weight_shape.size() != 2)
            throw ValueError(where + ": dense weight-shape must have 2 dims");
          if (l.weight_shape[1] != cur)
            throw ValueError(where + ": dense expects input " + std::to_string(l.weight_shape[1]) +
                             ", got " + std::to_string(cur));
          cur = l.weight_shape[0];
          break;
        case LayerKind::Conv1d: {
          if (spatial_done) throw ValueError(where + ": conv1d after global-average pooling");
          if (l.weight_shape.size() != 2)
            throw ValueError(where + ": conv1d weight-shape must be {channels,kernel}");
          const int64_t channels = l.weight_shape[0], kernel = l.weight_shape[1];
          if (l.stride < 1) throw ValueError(where + ": conv1d stride must be >= 1");
          if (kernel > cur)
            throw ValueError(where + ": conv1d kernel " + std::to_string(kernel) +
                             " exceeds input width " + std::to_string(cur));
          const int64_t steps = (cur - kernel) / l.stride + 1;
          cur = channels * steps;
          break;
        }
        case LayerKind::Activation:
          break;
        case LayerKind::Pooling:
          if (l.pooling == PoolingKind::Identity) break;
          if (spatial_done) throw ValueError(where + ": pooling after global-average pooling");
          if (l.pooling == PoolingKind::GlobalAverage) {
            cur = 1;
            spatial_done = true;
            break;
          }
          if (l.pool_window < 1) throw ValueError(where + ": pool window must be >= 1");
          if (cur % l.pool_window != 0)
            throw ValueError(where + ": width " + std::to_string(cur) + " not divisible by window " +
                             std::to_string(l.pool_window));
          cur /= l.pool_window;
          break;
        case LayerKind::SkipMerge: {
          if (l.skip_from < 0 || l.skip_from >= static_cast<int64_t>(li))
            throw ValueError(where + ": skip-merge must reference an earlier layer");
          const int64_t src = dims[static_cast<size_t>(l.skip_from)];
          if (src != cur)
            throw ValueError(where + ": skip-merge width " + std::to_string(src) +
                             " does not match " + std::to_string(cur));
          break;
        }
      }
      dims.push_back(cur);
    }
    if (cur != output_dim)
      throw ValueError("network spec: final width " + std::to_string(cur) + " != output_dim " +
                       std::to_string(output_dim));
    return dims;
  }

  void validate() const { layer_dims(); }
};

/// A spec plus its instantiated parameters. Layers without bias own no bias
/// entry at all.
struct Network {
  NetworkSpec spec;
  std::map<std::string, Tensor> params;

  static std::string weight_name(size_t li) { return "layer" + std::to_string(li) + ".weight"; }
  static std::string bias_name(size_t li) { return "layer" + std::to_string(li) + ".bias"; }
  static std::string slope_name(size_t li) { return "layer" + std::to_string(li) + ".slope"; }

  const Tensor& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ValueError("network: no parameter named " + name);
    return it->second;
  }
};

struct HomogeneityReport {
  bool homogeneous = true;
  std::vector<std::string> reasons;
};

/// A network is nonnegatively homogeneous iff no layer carries a bias term;
/// the activation and pooling families are homogeneous by construction.
inline HomogeneityReport classify_homogeneity(const NetworkSpec& spec) {
  spec.validate();
  HomogeneityReport rep;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    if ((spec.layers[li].kind == LayerKind::Dense || spec.layers[li].kind == LayerKind::Conv1d) &&
        spec.layers[li].has_bias) {
      rep.homogeneous = false;
      rep.reasons.push_back("bias at layer " + std::to_string(li));
    }
  }
  return rep;
}

/// Symmetric scaled-uniform init, bound = sqrt(6 / (fan_in + fan_out));
/// biases zero; PReLU slopes 0.25. Deterministic under seed.
inline Network init(const NetworkSpec& spec, uint64_t seed) {
  spec.validate();
  Network net;
  net.spec = spec;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    Rng rng(derive_seed(seed, "init", static_cast<uint64_t>(li)));
    if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv1d) {
      const int64_t fan_out = l.weight_shape[0], fan_in = l.weight_shape[1];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      Tensor w = Tensor::zeros(l.weight_shape);
      for (double& v : w.data) v = rng.uniform(-bound, bound);
      net.params.emplace(Network::weight_name(li), std::move(w));
      if (l.has_bias)
        net.params.emplace(Network::bias_name(li), Tensor::zeros({l.weight_shape[0]}));
    } else if (l.kind == LayerKind::Activation && l.activation == ActivationKind::PRelu) {
      net.params.emplace(Network::slope_name(li), Tensor::scalar(0.25));
    }
  }
  return net;
}

/// Bias removal: returns a copy whose every layer has has_bias = false and
/// whose bias parameters are dropped; weights and slopes are preserved.
inline Network strip_bias(const Network& net) {
  Network out = net;
  for (size_t li = 0; li < out.spec.layers.size(); ++li) {
    out.spec.layers[li].has_bias = false;
    out.params.erase(Network::bias_name(li));
  }
  return out;
}

/// A network bound into a graph: parameter leaves plus the layer pipeline.
/// apply() is the single-sample view of apply_batch(); both are the one code
/// path every consumer (prediction, attribution, training) goes through.
struct BoundNetwork {
  Graph* g = nullptr;
  const Network* net = nullptr;
  std::vector<std::string> param_names;
  std::vector<Value> param_leaves;

  Value param(const std::string& name) const {
    for (size_t i = 0; i < param_names.size(); ++i)
      if (param_names[i] == name) return param_leaves[i];
    throw ValueError("bound network: no parameter named " + name);
  }

  /// X has shape [input_dim, S]; columns are independent samples. Returns
  /// logits [output_dim, S].
  Value apply_batch(Value X) const {
    const NetworkSpec& spec = net->spec;
    const Tensor& xv = g->value(X);
    if (xv.ndim() != 2 || xv.shape[0] != spec.input_dim)
      throw ShapeError("apply_batch: expected [" + std::to_string(spec.input_dim) +
                       ",S] input, got " + shape_str(xv.shape));
    const int64_t S = xv.shape[1];
    Value h = X;
    std::vector<Value> outputs;
    for (size_t li = 0; li < spec.layers.size(); ++li) {
      const LayerSpec& l = spec.layers[li];
      switch (l.kind) {
        case LayerKind::Dense: {
          h = g->matmul(param(Network::weight_name(li)), h);
          if (l.has_bias) h = g->add(h, column_broadcast(param(Network::bias_name(li)), S));
          break;
        }
        case LayerKind::Conv1d: {
          const int64_t n = g->value(h).shape[0];
          const int64_t channels = l.weight_shape[0], kernel = l.weight_shape[1];
          const int64_t steps = (n - kernel) / l.stride + 1;
          // im2col: entry (t, j*S+s) = h[j*stride + t, s]
          std::vector<int64_t> idx(static_cast<size_t>(kernel * steps * S));
          size_t w = 0;
          for (int64_t t = 0; t < kernel; ++t)
            for (int64_t j = 0; j < steps; ++j)
              for (int64_t s = 0; s < S; ++s) idx[w++] = (j * l.stride + t) * S + s;
          Value cols = g->gather(h, std::move(idx), {kernel, steps * S});
          Value conv = g->matmul(param(Network::weight_name(li)), cols);  // [channels, steps*S]
          // flat layout of [channels, steps*S] equals [channels*steps, S]
          h = g->reshape(conv, {channels * steps, S});
          if (l.has_bias) {
            // per-channel bias, repeated over the spatial extent
            Value b = param(Network::bias_name(li));
            Tensor rep = Tensor::zeros({channels * steps, channels});
            for (int64_t ch = 0; ch < channels; ++ch)
              for (int64_t j = 0; j < steps; ++j) rep.at(ch * steps + j, ch) = 1.0;
            h = g->add(h, g->matmul(g->matmul(g->constant(std::move(rep)),
                                              g->reshape(b, {channels, 1})),
                                    ones_row(S)));
          }
          break;
        }
        case LayerKind::Activation: {
          switch (l.activation) {
            case ActivationKind::Identity:
              break;
            case ActivationKind::Relu:
              h = g->relu(h);
              break;
            case ActivationKind::LeakyRelu: {
              Value pos = g->relu(h);
              h = g->add(pos, g->scale(g->sub(h, pos), l.fixed_slope));
              break;
            }
            case ActivationKind::PRelu: {
              Value pos = g->relu(h);
              Value slope = g->broadcast(param(Network::slope_name(li)), g->value(h).shape);
              h = g->add(pos, g->mul(slope, g->sub(h, pos)));
              break;
            }
          }
          break;
        }
        case LayerKind::Pooling: {
          const int64_t n = g->value(h).shape[0];
          switch (l.pooling) {
            case PoolingKind::Identity:
              break;
            case PoolingKind::Max:
            case PoolingKind::Min: {
              const bool want_max = l.pooling == PoolingKind::Max;
              const int64_t w = l.pool_window, m = n / w;
              const Tensor& hv = g->value(h);
              // first extremal element wins ties
              std::vector<int64_t> idx(static_cast<size_t>(m * S));
              for (int64_t r = 0; r < m; ++r)
                for (int64_t s = 0; s < S; ++s) {
                  int64_t best = r * w;
                  for (int64_t t = 1; t < w; ++t) {
                    const double cand = hv.data[static_cast<size_t>((r * w + t) * S + s)];
                    const double cur = hv.data[static_cast<size_t>(best * S + s)];
                    if (want_max ? cand > cur : cand < cur) best = r * w + t;
                  }
                  idx[static_cast<size_t>(r * S + s)] = best * S + s;
                }
              h = g->gather(h, std::move(idx), {m, S});
              break;
            }
            case PoolingKind::Average: {
              const int64_t w = l.pool_window, m = n / w;
              Tensor P = Tensor::zeros({m, n});
              for (int64_t r = 0; r < m; ++r)
                for (int64_t t = 0; t < w; ++t) P.at(r, r * w + t) = 1.0 / static_cast<double>(w);
              h = g->matmul(g->constant(std::move(P)), h);
              break;
            }
            case PoolingKind::GlobalAverage: {
              h = g->matmul(g->constant(Tensor::full({1, n}, 1.0 / static_cast<double>(n))), h);
              break;
            }
          }
          break;
        }
        case LayerKind::SkipMerge:
          h = g->add(h, outputs[static_cast<size_t>(l.skip_from)]);
          break;
      }
      outputs.push_back(h);
    }
    return h;
  }

  /// x has shape [input_dim]; returns logits [output_dim].
  Value apply(Value x) const {
    const int64_t n = g->value(x).size();
    Value out = apply_batch(g->reshape(x, {n, 1}));
    return g->reshape(out, {g->value(out).shape[0]});
  }

  /// Scalar logit `target` of a single sample.
  Value apply_scalar(Value x, int64_t target) const {
    Value out = apply(x);
    const int64_t odim = g->value(out).size();
    if (target < 0 || target >= odim)
      throw ValueError("target index " + std::to_string(target) + " out of range for output dim " +
                       std::to_string(odim));
    return g->gather(out, {target}, {1});
  }

 private:
  Value ones_row(int64_t S) const { return g->constant(Tensor::full({1, S}, 1.0)); }
  Value column_broadcast(Value v, int64_t S) const {
    const int64_t n = g->value(v).size();
    return g->matmul(g->reshape(v, {n, 1}), ones_row(S));
  }
};

inline BoundNetwork bind(Graph& g, const Network& net) {
  net.spec.validate();
  BoundNetwork b;
  b.g = &g;
  b.net = &net;
  for (const auto& [name, tensor] : net.params) {
    b.param_names.push_back(name);
    b.param_leaves.push_back(g.leaf(tensor));
  }
  return b;
}

/// Forward pass on a fresh graph; logits for a single input.
inline Tensor predict(const Network& net, const Tensor& x) {
  if (x.size() != net.spec.input_dim || x.ndim() != 1)
    throw ShapeError("predict: expected input shape [" + std::to_string(net.spec.input_dim) +
                     "], got " + shape_str(x.shape));
  Graph g;
  BoundNetwork b = bind(g, net);
  return g.value(b.apply(g.leaf(x)));
}

inline int64_t predicted_class(const Tensor& logits) {
  if (logits.size() == 1) return logits[0] > 0.0 ? 1 : 0;
  int64_t best = 0;
  for (int64_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

/// Plain MLP spec builder: dense layers with the given activation between
/// them (none after the last).
inline NetworkSpec make_mlp(int64_t input_dim, const std::vector<int64_t>& hidden,
                            int64_t output_dim, bool bias,
                            ActivationKind act = ActivationKind::Relu) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.output_dim = output_dim;
  int64_t cur = input_dim;
  for (int64_t hdim : hidden) {
    LayerSpec dense;
    dense.kind = LayerKind::Dense;
    dense.weight_shape = {hdim, cur};
    dense.has_bias = bias;
    spec.layers.push_back(dense);
    LayerSpec a;
    a.kind = LayerKind::Activation;
    a.activation = act;
    spec.layers.push_back(a);
    cur = hdim;
  }
  LayerSpec out;
  out.kind = LayerKind::Dense;
  out.weight_shape = {output_dim, cur};
  out.has_bias = bias;
  spec.layers.push_back(out);
  return spec;
}

// ---------------------------------------------------------------------------
// serialization (versioned JSON; parameter doubles round-trip bit-exactly)

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::Activation: return "activation";
    case LayerKind::Pooling: return "pooling";
    case LayerKind::SkipMerge: return "skip-merge";
  }
  return "?";
}
inline std::string to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::LeakyRelu: return "leaky-relu";
    case ActivationKind::PRelu: return "prelu";
  }
  return "?";
}
inline std::string to_string(PoolingKind k) {
  switch (k) {
    case PoolingKind::Identity: return "identity";
    case PoolingKind::Max: return "max";
    case PoolingKind::Min: return "min";
    case PoolingKind::Average: return "average";
    case PoolingKind::GlobalAverage: return "global-average";
  }
  return "?";
}

inline LayerKind layer_kind_from(const std::string& s) {
  if (s == "dense") return LayerKind::Dense;
  if (s == "conv1d") return LayerKind::Conv1d;
  if (s == "activation") return LayerKind::Activation;
  if (s == "pooling") return LayerKind::Pooling;
  if (s == "skip-merge") return LayerKind::SkipMerge;
  throw ValueError("unknown layer kind: " + s);
}
inline ActivationKind activation_from(const std::string& s) {
  if (s == "identity") return ActivationKind::Identity;
  if (s == "relu") return ActivationKind::Relu;
  if (s == "leaky-relu") return ActivationKind::LeakyRelu;
  if (s == "prelu") return ActivationKind::PRelu;
  throw ValueError("unknown activation kind: " + s);
}
inline PoolingKind pooling_from(const std::string& s) {
  if (s == "identity") return PoolingKind::Identity;
  if (s == "max") return PoolingKind::Max;
  if (s == "min") return PoolingKind::Min;
  if (s == "average") return PoolingKind::Average;
  if (s == "global-average") return PoolingKind::GlobalAverage;
  throw ValueError("unknown pooling kind: " + s);
}

inline nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : spec.layers) {
    nlohmann::json j;
    j["kind"] = to_string(l.kind);
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::Conv1d:
        j["weight-shape"] = l.weight_shape;
        j["has-bias"] = l.has_bias;
        if (l.kind == LayerKind::Conv1d) j["stride"] = l.stride;
        break;
      case LayerKind::Activation:
        j["activation-kind"] = to_string(l.activation);
        if (l.activation == ActivationKind::LeakyRelu) j["slope"] = l.fixed_slope;
        break;
      case LayerKind::Pooling:
        j["pooling-kind"] = to_string(l.pooling);
        if (l.pooling != PoolingKind::GlobalAverage && l.pooling != PoolingKind::Identity)
          j["pool-window"] = l.pool_window;
        break;
      case LayerKind::SkipMerge:
        j["skip-from"] = l.skip_from;
        break;
    }
    layers.push_back(std::move(j));
  }
  return nlohmann::json{{"input-dim", spec.input_dim},
                        {"output-dim", spec.output_dim},
                        {"layers", std::move(layers)}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.input_dim = j.at("input-dim").get<int64_t>();
  spec.output_dim = j.at("output-dim").get<int64_t>();
  for (const auto& jl : j.at("layers")) {
    LayerSpec l;
    l.kind = layer_kind_from(jl.at("kind").get<std::string>());
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::Conv1d:
        l.weight_shape = jl.at("weight-shape").get<Shape>();
        l.has_bias = jl.at("has-bias").get<bool>();
        if (l.kind == LayerKind::Conv1d) l.stride = jl.value("stride", int64_t{1});
        break;
      case LayerKind::Activation:
        l.activation = activation_from(jl.at("activation-kind").get<std::string>());
        l.fixed_slope = jl.value("slope", 0.01);
        break;
      case LayerKind::Pooling:
        l.pooling = pooling_from(jl.at("pooling-kind").get<std::string>());
        l.pool_window = jl.value("pool-window", int64_t{2});
        break;
      case LayerKind::SkipMerge:
        l.skip_from = jl.at("skip-from").get<int64_t>();
        break;
    }
    spec.layers.push_back(std::move(l));
  }
  spec.validate();
  return spec;
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : net.params)
    params[name] = nlohmann::json{{"shape", t.shape}, {"data", t.data}};
  return nlohmann::json{
      {"format-version", 1}, {"spec", spec_to_json(net.spec)}, {"params", std::move(params)}};
}

inline Network network_from_json(const nlohmann::json& j) {
  if (j.at("format-version").get<int>() != 1)
    throw ValueError("unsupported network file version");
  Network net;
  net.spec = spec_from_json(j.at("spec"));
  for (const auto& [name, jp] : j.at("params").items()) {
    Tensor t(jp.at("shape").get<Shape>(), jp.at("data").get<std::vector<double>>());
    net.params.emplace(name, std::move(t));
  }
  return net;
}

inline void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot open " + path + " for writing");
  out << network_to_json(net).dump(2) << "\n";
}

inline Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return network_from_json(j);
}

}  // namespace xgrad
