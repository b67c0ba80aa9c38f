#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xgrad/attribution.hpp"
#include "xgrad/dataset.hpp"
#include "xgrad/graph.hpp"
#include "xgrad/network.hpp"
#include "xgrad/parallel.hpp"
#include "xgrad/rng.hpp"

namespace xgrad {

enum class PriorAttrMethod { Grad, Rrr, Eg, Xg };
enum class PriorKind { SparsityGini, ZeroAttributionMask };
enum class OptimizerKind { Sgd, Adam };
enum class LossKind { BinaryCrossEntropy, SoftmaxCrossEntropy };

inline std::string to_string(PriorAttrMethod m) {
  switch (m) {
    case PriorAttrMethod::Grad: return "grad";
    case PriorAttrMethod::Rrr: return "rrr";
    case PriorAttrMethod::Eg: return "eg";
    case PriorAttrMethod::Xg: return "xg";
  }
  return "?";
}

struct PriorConfig {
  PriorAttrMethod method = PriorAttrMethod::Xg;
  PriorKind kind = PriorKind::SparsityGini;
  std::vector<int64_t> masked_features;  // ZeroAttributionMask target set
  double lambda = 1.0;
  int64_t eg_references = 1;
};

struct TrainConfig {
  int64_t epochs = 40;
  int64_t batch_size = 16;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  uint64_t seed = 42;
  LossKind loss = LossKind::BinaryCrossEntropy;
};

// ---------------------------------------------------------------------------
// attribution prior

/// Gini sparsity prior over a batch attribution matrix A of shape [m,n]:
///   Omega = - sum_ij |Abar_i - Abar_j| / (m * sum_i Abar_i),
/// where Abar_i = |column mean of A| over the batch and the denominator is
/// guarded by 1e-8. Taking the magnitude of the batch mean keeps Abar
/// nonnegative, which bounds Omega in [-2(n-1)/m, 0] (zero iff Abar is
/// constant); on the raw signed mean the ratio is unbounded below and
/// training collapses the denominator instead of concentrating attributions.
/// Differentiable; minimizing it maximizes the dispersion of the mean
/// attribution, i.e. drives attribution mass onto few features.
inline Value gini_prior_node(Graph& g, Value batch_attr) {
  const Tensor& A = g.value(batch_attr);
  if (A.ndim() != 2) throw ShapeError("gini_prior: expected [m,n] attribution matrix");
  const int64_t m = A.shape[0], n = A.shape[1];
  if (m < 1 || n < 2) throw ValueError("gini_prior: need m >= 1 samples and n >= 2 features");
  Value mean_row = g.abs(g.matmul(g.constant(Tensor::full({1, m}, 1.0 / static_cast<double>(m))),
                                  batch_attr));                // [1,n], nonnegative
  Value abar_col = g.reshape(mean_row, {n, 1});
  Value col_rep = g.matmul(abar_col, g.constant(Tensor::full({1, n}, 1.0)));  // [n,n]
  Value dispersion = g.sum(g.abs(g.sub(col_rep, g.transpose(col_rep))));
  Value denom = g.scale(g.add_const(g.sum(mean_row), 1e-8), static_cast<double>(m));
  return g.neg(g.mul(dispersion, g.recip(denom)));
}

inline double gini_prior(const Tensor& batch_attr) {
  Graph g;
  return g.value(gini_prior_node(g, g.leaf(batch_attr))).scalar_value();
}

/// Plain Gini coefficient of a value vector (post-training sparsity metric).
inline double gini_coefficient(std::span<const double> v) {
  const size_t n = v.size();
  double num = 0.0, total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    total += v[i];
    for (size_t j = 0; j < n; ++j) num += std::abs(v[i] - v[j]);
  }
  return num / (2.0 * static_cast<double>(n) * (std::abs(total) + 1e-12));
}

/// Penalizes attribution mass on the given features: mean over the batch of
/// the squared attributions restricted to the masked set.
inline Value zero_attribution_prior_node(Graph& g, Value batch_attr,
                                         const std::vector<int64_t>& masked) {
  const Tensor& A = g.value(batch_attr);
  const int64_t m = A.shape[0], n = A.shape[1];
  Tensor mask = Tensor::zeros({m, n});
  for (int64_t f : masked) {
    if (f < 0 || f >= n) throw ValueError("zero-attribution prior: feature index out of range");
    for (int64_t s = 0; s < m; ++s) mask.at(s, f) = 1.0;
  }
  Value masked_attr = g.mul(batch_attr, g.constant(std::move(mask)));
  return g.scale(g.sum(g.mul(masked_attr, masked_attr)), 1.0 / static_cast<double>(m));
}

// ---------------------------------------------------------------------------
// losses (batched; samples are columns)

/// Numerically stable binary cross-entropy with logits; Z is [1,m].
inline Value bce_loss_node(Graph& g, Value Z, const std::vector<int64_t>& labels) {
  const Tensor& zt = g.value(Z);
  const int64_t m = zt.size();
  Value z = g.reshape(Z, {m});
  std::vector<double> y(static_cast<size_t>(m));
  for (int64_t s = 0; s < m; ++s) y[static_cast<size_t>(s)] = static_cast<double>(labels[static_cast<size_t>(s)]);
  Value yv = g.constant(Tensor::vec(std::move(y)));
  // max(z,0) - z*y + log(1 + exp(-|z|))
  Value softplus = g.log(g.add_const(g.exp(g.neg(g.abs(z))), 1.0));
  Value per_sample = g.add(g.sub(g.relu(z), g.mul(z, yv)), softplus);
  return g.mean(per_sample);
}

/// Stable softmax cross-entropy; Z is [C,m], labels index rows.
inline Value softmax_ce_loss_node(Graph& g, Value Z, const std::vector<int64_t>& labels) {
  const Tensor& zt = g.value(Z);
  const int64_t C = zt.shape[0], m = zt.shape[1];
  std::vector<int64_t> max_idx(static_cast<size_t>(m));
  for (int64_t s = 0; s < m; ++s) {
    int64_t best = 0;
    for (int64_t c = 1; c < C; ++c)
      if (zt.at(c, s) > zt.at(best, s)) best = c;
    max_idx[static_cast<size_t>(s)] = best * m + s;
  }
  Value M = g.gather(Z, std::move(max_idx), {1, m});
  Value shifted = g.sub(Z, g.matmul(g.constant(Tensor::full({C, 1}, 1.0)), M));
  Value colsum = g.matmul(g.constant(Tensor::full({1, C}, 1.0)), g.exp(shifted));  // [1,m]
  Value lse = g.add(g.log(colsum), M);
  std::vector<int64_t> pick(static_cast<size_t>(m));
  for (int64_t s = 0; s < m; ++s) {
    if (labels[static_cast<size_t>(s)] < 0 || labels[static_cast<size_t>(s)] >= C)
      throw ValueError("softmax loss: label out of range");
    pick[static_cast<size_t>(s)] = labels[static_cast<size_t>(s)] * m + s;
  }
  Value zy = g.gather(Z, std::move(pick), {1, m});
  return g.mean(g.sub(lse, zy));
}

// ---------------------------------------------------------------------------
// in-training batch attribution (shared machinery with the standalone module)

/// [n,m] attribution node for the batch columns of X, per PriorConfig. The
/// node stays differentiable w.r.t. the bound parameters (second-order path).
inline Value batch_attribution_node(Graph& g, const BoundNetwork& bnet, Value X,
                                    const std::vector<int64_t>& targets, const PriorConfig& pc,
                                    const DatasetHandle& reference_pool, Rng& rng) {
  switch (pc.method) {
    case PriorAttrMethod::Grad:
      return batch_gradient_node(g, bnet, X, targets);
    case PriorAttrMethod::Xg:
      return batch_x_gradient_node(g, bnet, X, targets);
    case PriorAttrMethod::Rrr: {
      const int64_t m = g.value(X).shape[1];
      Value Y = bnet.apply_batch(X);
      const int64_t odim = g.value(Y).shape[0];
      std::vector<int64_t> pick(static_cast<size_t>(m));
      for (int64_t s = 0; s < m; ++s) pick[static_cast<size_t>(s)] = targets[static_cast<size_t>(s)] * m + s;
      (void)odim;
      Value logits = g.gather(Y, std::move(pick), {m});
      Value obj = g.sum(g.log(g.add_const(logits, 1e-6)));  // stabilized form
      return g.gradient(obj, std::span<const Value>(&X, 1), 2)[0];
    }
    case PriorAttrMethod::Eg: {
      const Tensor& Xv = g.value(X);
      const int64_t n = Xv.shape[0], m = Xv.shape[1], k = pc.eg_references;
      if (k < 1) throw ValueError("eg prior: reference count must be >= 1");
      if (reference_pool.num_samples() < 1)
        throw ValueError("eg prior: empty reference pool");
      Tensor interp = Tensor::zeros({n, m * k});
      Tensor diff = Tensor::zeros({n, m * k});
      std::vector<int64_t> rep_targets(static_cast<size_t>(m * k));
      for (int64_t s = 0; s < m; ++s)
        for (int64_t j = 0; j < k; ++j) {
          const int64_t ref_row = rng.below(reference_pool.num_samples());
          const double alpha = rng.uniform();
          const int64_t c = s * k + j;
          rep_targets[static_cast<size_t>(c)] = targets[static_cast<size_t>(s)];
          for (int64_t i = 0; i < n; ++i) {
            const double xi = Xv.at(i, s);
            const double ri = reference_pool.features.at(ref_row, i);
            interp.at(i, c) = ri + alpha * (xi - ri);
            diff.at(i, c) = xi - ri;
          }
        }
      Value P = g.leaf(std::move(interp));
      Value G = batch_gradient_node(g, bnet, P, rep_targets);
      Value terms = g.mul(g.constant(std::move(diff)), G);  // [n, m*k]
      Tensor avg = Tensor::zeros({m * k, m});
      for (int64_t s = 0; s < m; ++s)
        for (int64_t j = 0; j < k; ++j) avg.at(s * k + j, s) = 1.0 / static_cast<double>(k);
      return g.matmul(terms, g.constant(std::move(avg)));  // [n,m]
    }
  }
  throw ValueError("batch_attribution_node: bad method");
}

// ---------------------------------------------------------------------------
// training loop

struct EpochTrace {
  int64_t epoch = 0;
  double train_task_loss = 0.0;
  double train_total_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;  // ROC-AUC for binary output, accuracy otherwise
};

struct TrainResult {
  Network net;
  std::vector<EpochTrace> trace;
};

class TrainingDiverged : public Error {
 public:
  std::vector<EpochTrace> trace;
  TrainingDiverged(std::string msg, std::vector<EpochTrace> t)
      : Error(std::move(msg)), trace(std::move(t)) {}
};

inline double roc_auc(std::span<const double> scores, std::span<const int64_t> labels);

namespace detail {

struct AdamSlot {
  std::vector<double> m, v;
};

inline void evaluate_split(const Network& net, const DatasetHandle& ds, LossKind loss,
                           double& out_loss, double& out_metric) {
  const int64_t N = ds.num_samples(), n = ds.num_features();
  const int64_t chunk = 256;
  double loss_acc = 0.0;
  std::vector<double> scores(static_cast<size_t>(N));
  std::vector<int64_t> hits;
  for (int64_t s0 = 0; s0 < N; s0 += chunk) {
    const int64_t S = std::min(chunk, N - s0);
    Tensor pts = Tensor::zeros({n, S});
    std::vector<int64_t> labels(static_cast<size_t>(S));
    for (int64_t s = 0; s < S; ++s) {
      labels[static_cast<size_t>(s)] = ds.labels[static_cast<size_t>(s0 + s)];
      for (int64_t i = 0; i < n; ++i) pts.at(i, s) = ds.features.at(s0 + s, i);
    }
    Graph g;
    BoundNetwork b = bind(g, net);
    Value Z = b.apply_batch(g.leaf(std::move(pts)));
    Value L = loss == LossKind::BinaryCrossEntropy ? bce_loss_node(g, Z, labels)
                                                   : softmax_ce_loss_node(g, Z, labels);
    loss_acc += g.value(L).scalar_value() * static_cast<double>(S);
    const Tensor& zt = g.value(Z);
    for (int64_t s = 0; s < S; ++s) {
      if (zt.shape[0] == 1) {
        scores[static_cast<size_t>(s0 + s)] = zt.at(0, s);
      } else {
        int64_t best = 0;
        for (int64_t c = 1; c < zt.shape[0]; ++c)
          if (zt.at(c, s) > zt.at(best, s)) best = c;
        hits.push_back(best == labels[static_cast<size_t>(s)] ? 1 : 0);
      }
    }
  }
  out_loss = loss_acc / static_cast<double>(N);
  if (!hits.empty()) {
    double acc = 0.0;
    for (int64_t h : hits) acc += static_cast<double>(h);
    out_metric = acc / static_cast<double>(hits.size());
  } else {
    out_metric = roc_auc(scores, ds.labels);
  }
}

}  // namespace detail

/// Mini-batch optimization of task loss + lambda * prior. The prior's
/// attribution is rebuilt inside every batch graph, so its gradient w.r.t.
/// the parameters differentiates through the attribution's own gradient.
/// Deterministic under tc.seed. Aborts with the trace on NaN loss.
inline TrainResult train(const Network& initial, const DatasetHandle& train_ds,
                         const DatasetHandle* val_ds, const TrainConfig& tc,
                         const PriorConfig* pc) {
  if (train_ds.num_samples() < 1) throw ValueError("train: dataset is empty");
  if (tc.batch_size < 1) throw ValueError("train: batch size must be >= 1");
  if (pc && pc->method == PriorAttrMethod::Xg) {
    HomogeneityReport rep = classify_homogeneity(initial.spec);
    if (!rep.homogeneous) throw HomogeneityError(rep.reasons);
  }
  const bool use_prior = pc != nullptr && pc->lambda != 0.0;

  Network net = initial;
  std::vector<std::string> names;
  for (const auto& [name, t] : net.params) names.push_back(name);
  std::vector<detail::AdamSlot> slots(names.size());
  for (size_t p = 0; p < names.size(); ++p) {
    const size_t sz = net.params.at(names[p]).data.size();
    slots[p].m.assign(sz, 0.0);
    slots[p].v.assign(sz, 0.0);
  }
  int64_t step = 0;

  Rng rng(derive_seed(tc.seed, "train"));
  const int64_t N = train_ds.num_samples(), n = train_ds.num_features();
  const bool binary = net.spec.output_dim == 1;
  std::vector<EpochTrace> trace;

  for (int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<int64_t> order = rng.permutation(N);
    double task_acc = 0.0, total_acc = 0.0;
    for (int64_t b0 = 0; b0 < N; b0 += tc.batch_size) {
      const int64_t mb = std::min(tc.batch_size, N - b0);
      Tensor batch = Tensor::zeros({n, mb});
      std::vector<int64_t> labels(static_cast<size_t>(mb));
      for (int64_t s = 0; s < mb; ++s) {
        const int64_t row = order[static_cast<size_t>(b0 + s)];
        labels[static_cast<size_t>(s)] = train_ds.labels[static_cast<size_t>(row)];
        for (int64_t i = 0; i < n; ++i) batch.at(i, s) = train_ds.features.at(row, i);
      }
      Graph g;
      BoundNetwork bnet = bind(g, net);
      Value X = g.leaf(std::move(batch));
      Value Z = bnet.apply_batch(X);
      Value task = tc.loss == LossKind::BinaryCrossEntropy ? bce_loss_node(g, Z, labels)
                                                           : softmax_ce_loss_node(g, Z, labels);
      Value obj = task;
      if (use_prior) {
        std::vector<int64_t> targets(static_cast<size_t>(mb), 0);
        if (!binary) targets = labels;
        Value A = batch_attribution_node(g, bnet, X, targets, *pc, train_ds, rng);
        Value Amn = g.transpose(A);  // [m,n] as the prior expects
        Value omega = pc->kind == PriorKind::SparsityGini
                          ? gini_prior_node(g, Amn)
                          : zero_attribution_prior_node(g, Amn, pc->masked_features);
        obj = g.add(task, g.scale(omega, pc->lambda));
      }
      const double task_v = g.value(task).scalar_value();
      const double total_v = g.value(obj).scalar_value();
      if (!std::isfinite(total_v))
        throw TrainingDiverged("training diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch),
                               trace);
      task_acc += task_v * static_cast<double>(mb);
      total_acc += total_v * static_cast<double>(mb);

      std::vector<Value> grads = g.gradient(obj, bnet.param_leaves, 1);
      ++step;
      for (size_t p = 0; p < names.size(); ++p) {
        Tensor& param = net.params.at(names[p]);
        const Tensor& grad = g.value(grads[p]);
        if (tc.optimizer == OptimizerKind::Sgd) {
          for (size_t i = 0; i < param.data.size(); ++i)
            param.data[i] -= tc.learning_rate * grad.data[i];
        } else {
          detail::AdamSlot& slot = slots[p];
          const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
          const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
          for (size_t i = 0; i < param.data.size(); ++i) {
            slot.m[i] = tc.beta1 * slot.m[i] + (1.0 - tc.beta1) * grad.data[i];
            slot.v[i] = tc.beta2 * slot.v[i] + (1.0 - tc.beta2) * grad.data[i] * grad.data[i];
            param.data[i] -= tc.learning_rate * (slot.m[i] / bc1) /
                             (std::sqrt(slot.v[i] / bc2) + tc.adam_eps);
          }
        }
      }
    }
    EpochTrace et;
    et.epoch = epoch;
    et.train_task_loss = task_acc / static_cast<double>(N);
    et.train_total_loss = total_acc / static_cast<double>(N);
    if (val_ds) detail::evaluate_split(net, *val_ds, tc.loss, et.val_loss, et.val_metric);
    trace.push_back(et);
  }
  return TrainResult{std::move(net), std::move(trace)};
}

// ---------------------------------------------------------------------------
// rank-based ROC-AUC

/// Probability that a positive outranks a negative, ties counted half
/// (average-rank formulation).
inline double roc_auc(std::span<const double> scores, std::span<const int64_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: size mismatch");
  const size_t N = scores.size();
  std::vector<size_t> order(N);
  for (size_t i = 0; i < N; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(N);
  size_t i = 0;
  while (i < N) {
    size_t j = i;
    while (j + 1 < N && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  int64_t npos = 0, nneg = 0;
  for (size_t k = 0; k < N; ++k) {
    if (labels[k] == 1) {
      pos_rank_sum += rank[k];
      ++npos;
    } else {
      ++nneg;
    }
  }
  if (npos == 0 || nneg == 0) throw ValueError("roc_auc: both classes must be present");
  return (pos_rank_sum - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0) /
         (static_cast<double>(npos) * static_cast<double>(nneg));
}

// ---------------------------------------------------------------------------
// subsampled-dataset benchmark

struct ExperimentArm {
  std::string name;
  std::optional<PriorConfig> prior;
  bool strip_bias = false;
};

struct ArmSummary {
  std::string name;
  std::vector<double> aucs;  // one per repeat
  double mean = 0.0;
  double sem2 = 0.0;  // two standard errors of the mean
};

/// For each repeat draws disjoint train/validation subsets (train_size and
/// val_size samples; val_size defaults to train_size), trains one model per
/// arm from a shared per-repeat init, and summarizes validation ROC-AUC as
/// mean +- 2*SEM. Parallel across (repeat, arm) with isolated seed streams.
inline std::vector<ArmSummary> subsample_experiment(const DatasetHandle& full,
                                                    const NetworkSpec& base_spec,
                                                    int64_t n_repeats, int64_t train_size,
                                                    std::span<const ExperimentArm> arms,
                                                    const TrainConfig& base_tc, uint64_t seed,
                                                    int threads = 0, int64_t val_size = 0) {
  if (val_size <= 0) val_size = train_size;
  if (train_size + val_size > full.num_samples())
    throw ValueError("subsample_experiment: dataset too small for disjoint splits");
  const int64_t A = static_cast<int64_t>(arms.size());
  std::vector<std::vector<double>> auc(static_cast<size_t>(A),
                                       std::vector<double>(static_cast<size_t>(n_repeats), 0.0));
  parallel_for(n_repeats * A, threads, [&](int64_t task) {
    const int64_t r = task / A;
    const int64_t a = task % A;
    Rng split_rng(derive_seed(seed, "subsample", static_cast<uint64_t>(r)));
    std::vector<int64_t> perm = split_rng.permutation(full.num_samples());
    std::vector<int64_t> train_idx(perm.begin(), perm.begin() + train_size);
    std::vector<int64_t> val_idx(perm.begin() + train_size, perm.begin() + train_size + val_size);
    DatasetHandle train_ds = subset(full, train_idx);
    DatasetHandle val_ds = subset(full, val_idx);

    Network net = init(base_spec, derive_seed(seed, "init", static_cast<uint64_t>(r)));
    if (arms[static_cast<size_t>(a)].strip_bias) net = strip_bias(net);
    TrainConfig tc = base_tc;
    tc.seed = derive_seed(seed, "train", static_cast<uint64_t>(r), static_cast<uint64_t>(a));
    const PriorConfig* pc = arms[static_cast<size_t>(a)].prior ? &*arms[static_cast<size_t>(a)].prior : nullptr;
    TrainResult res = train(net, train_ds, nullptr, tc, pc);

    std::vector<double> scores(static_cast<size_t>(val_ds.num_samples()));
    for (int64_t i = 0; i < val_ds.num_samples(); ++i)
      scores[static_cast<size_t>(i)] = predict(res.net, val_ds.sample(i))[0];
    auc[static_cast<size_t>(a)][static_cast<size_t>(r)] = roc_auc(scores, val_ds.labels);
  });

  std::vector<ArmSummary> out;
  for (int64_t a = 0; a < A; ++a) {
    ArmSummary s;
    s.name = arms[static_cast<size_t>(a)].name;
    s.aucs = auc[static_cast<size_t>(a)];
    double mean = 0.0;
    for (double v : s.aucs) mean += v;
    mean /= static_cast<double>(s.aucs.size());
    double var = 0.0;
    for (double v : s.aucs) var += (v - mean) * (v - mean);
    var /= std::max<double>(1.0, static_cast<double>(s.aucs.size()) - 1.0);
    s.mean = mean;
    s.sem2 = 2.0 * std::sqrt(var / static_cast<double>(s.aucs.size()));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace xgrad
