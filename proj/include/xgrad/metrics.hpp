#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "xgrad/attribution.hpp"
#include "xgrad/dataset.hpp"
#include "xgrad/network.hpp"

namespace xgrad {

/// Replaces masked features with reference values. Masking every feature
/// yields the reference itself.
struct MaskFn {
  enum class Kind { MeanSubstitution, FixedReference };
  Kind kind = Kind::MeanSubstitution;
  Tensor reference;
  std::string description;

  static MaskFn mean_substitution(const DatasetHandle& ds) {
    MaskFn m;
    m.kind = Kind::MeanSubstitution;
    m.reference = column_means(ds);
    m.description = "mean-substitution";
    return m;
  }
  static MaskFn fixed_reference(Tensor ref) {
    MaskFn m;
    m.kind = Kind::FixedReference;
    m.reference = std::move(ref);
    m.description = "fixed-reference";
    return m;
  }

  Tensor apply(const Tensor& x, std::span<const int64_t> masked) const {
    if (!x.same_shape(reference))
      throw ShapeError("mask: input shape " + shape_str(x.shape) + " != reference " +
                       shape_str(reference.shape));
    Tensor out = x;
    for (int64_t f : masked) out[f] = reference[f];
    return out;
  }
};

enum class MaskMetric { KPM, KNM, KAM, RAM };

inline std::string to_string(MaskMetric m) {
  switch (m) {
    case MaskMetric::KPM: return "KPM";
    case MaskMetric::KNM: return "KNM";
    case MaskMetric::KAM: return "KAM";
    case MaskMetric::RAM: return "RAM";
  }
  return "?";
}

struct MetricResult {
  MaskMetric metric = MaskMetric::KPM;
  std::string method;
  std::vector<std::pair<double, double>> curve;  // (masked fraction, measurement)
  double auc = 0.0;
  bool not_applicable = false;
};

using AttrFn = std::function<Attribution(const Network&, const Tensor& x, int64_t target)>;

inline std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int i = 0; i <= 10; ++i) f.push_back(static_cast<double>(i) / 10.0);
  return f;
}

inline double trapezoid_auc(std::span<const std::pair<double, double>> curve) {
  double auc = 0.0;
  for (size_t i = 1; i < curve.size(); ++i)
    auc += 0.5 * (curve[i].second + curve[i - 1].second) * (curve[i].first - curve[i - 1].first);
  return auc;
}

namespace detail {

// Masking order ties are broken by feature index (stable sorts over the
// index range), so curves are deterministic.
struct SampleEval {
  std::vector<int64_t> always_masked;    // masked at every fraction
  std::vector<int64_t> progressive;      // masked front-first as fraction grows
};

inline MetricResult run_mask_metric(const Network& net, const DatasetHandle& ds,
                                    const AttrFn& attr, const std::string& method_name,
                                    const MaskFn& mask, std::span<const double> fractions,
                                    MaskMetric metric) {
  MetricResult res;
  res.metric = metric;
  res.method = method_name;
  const int64_t N = ds.num_samples();
  const bool logit_metric = metric == MaskMetric::KPM || metric == MaskMetric::KNM;

  std::vector<SampleEval> plans(static_cast<size_t>(N));
  std::vector<int64_t> targets(static_cast<size_t>(N));
  for (int64_t s = 0; s < N; ++s) {
    const Tensor x = ds.sample(s);
    const int64_t target = net.spec.output_dim == 1 ? 0 : ds.labels[static_cast<size_t>(s)];
    targets[static_cast<size_t>(s)] = target;
    const Attribution a = attr(net, x, target);
    SampleEval& plan = plans[static_cast<size_t>(s)];
    switch (metric) {
      case MaskMetric::KPM:
        // negatives masked by default; positives masked least-positive first
        for (int64_t i = 0; i < a.values.size(); ++i)
          (a.values[i] < 0.0 ? plan.always_masked : plan.progressive).push_back(i);
        std::stable_sort(plan.progressive.begin(), plan.progressive.end(),
                         [&](int64_t i, int64_t j) { return a.values[i] < a.values[j]; });
        break;
      case MaskMetric::KNM:
        // mirror image: positives masked by default; negatives least-negative first
        for (int64_t i = 0; i < a.values.size(); ++i)
          (a.values[i] > 0.0 ? plan.always_masked : plan.progressive).push_back(i);
        std::stable_sort(plan.progressive.begin(), plan.progressive.end(),
                         [&](int64_t i, int64_t j) { return a.values[i] > a.values[j]; });
        break;
      case MaskMetric::KAM:
        // keep the most important: mask smallest |a| first
        for (int64_t i = 0; i < a.values.size(); ++i) plan.progressive.push_back(i);
        std::stable_sort(plan.progressive.begin(), plan.progressive.end(), [&](int64_t i, int64_t j) {
          return std::abs(a.values[i]) < std::abs(a.values[j]);
        });
        break;
      case MaskMetric::RAM:
        // remove the most important first
        for (int64_t i = 0; i < a.values.size(); ++i) plan.progressive.push_back(i);
        std::stable_sort(plan.progressive.begin(), plan.progressive.end(), [&](int64_t i, int64_t j) {
          return std::abs(a.values[i]) > std::abs(a.values[j]);
        });
        break;
    }
  }

  for (double f : fractions) {
    double acc = 0.0;
    for (int64_t s = 0; s < N; ++s) {
      const SampleEval& plan = plans[static_cast<size_t>(s)];
      const int64_t take =
          std::llround(f * static_cast<double>(plan.progressive.size()));
      std::vector<int64_t> masked = plan.always_masked;
      masked.insert(masked.end(), plan.progressive.begin(), plan.progressive.begin() + take);
      const Tensor logits = predict(net, mask.apply(ds.sample(s), masked));
      if (logit_metric)
        acc += logits[targets[static_cast<size_t>(s)]];
      else
        acc += predicted_class(logits) == ds.labels[static_cast<size_t>(s)] ? 1.0 : 0.0;
    }
    res.curve.emplace_back(f, acc / static_cast<double>(N));
  }
  res.auc = trapezoid_auc(res.curve);
  return res;
}

}  // namespace detail

/// Keep Positive Mask: target logit while positive features are progressively
/// masked least-positive first (negatives always masked). Higher is better.
inline MetricResult keep_positive_mask(const Network& net, const DatasetHandle& ds,
                                       const AttrFn& attr, const std::string& method,
                                       const MaskFn& mask,
                                       std::span<const double> fractions) {
  return detail::run_mask_metric(net, ds, attr, method, mask, fractions, MaskMetric::KPM);
}

/// Keep Negative Mask: the sign-mirrored KPM; lower is better.
inline MetricResult keep_negative_mask(const Network& net, const DatasetHandle& ds,
                                       const AttrFn& attr, const std::string& method,
                                       const MaskFn& mask,
                                       std::span<const double> fractions) {
  return detail::run_mask_metric(net, ds, attr, method, mask, fractions, MaskMetric::KNM);
}

/// Keep Absolute Mask: accuracy while keeping the largest-|a| features;
/// higher is better.
inline MetricResult keep_absolute_mask(const Network& net, const DatasetHandle& ds,
                                       const AttrFn& attr, const std::string& method,
                                       const MaskFn& mask,
                                       std::span<const double> fractions) {
  return detail::run_mask_metric(net, ds, attr, method, mask, fractions, MaskMetric::KAM);
}

/// Remove Absolute Mask: accuracy while removing the largest-|a| features
/// first; lower is better.
inline MetricResult remove_absolute_mask(const Network& net, const DatasetHandle& ds,
                                         const AttrFn& attr, const std::string& method,
                                         const MaskFn& mask,
                                         std::span<const double> fractions) {
  return detail::run_mask_metric(net, ds, attr, method, mask, fractions, MaskMetric::RAM);
}

/// All four metrics for every method; methods that refuse the network (e.g.
/// X-Gradient on a biased net) produce N/A rows.
inline std::vector<MetricResult> benchmark_table(const Network& net, const DatasetHandle& ds,
                                                 std::span<const std::pair<std::string, AttrFn>> methods,
                                                 const MaskFn& mask,
                                                 std::span<const double> fractions) {
  std::vector<MetricResult> out;
  for (const auto& [name, fn] : methods) {
    for (MaskMetric metric :
         {MaskMetric::KPM, MaskMetric::KNM, MaskMetric::KAM, MaskMetric::RAM}) {
      try {
        out.push_back(detail::run_mask_metric(net, ds, fn, name, mask, fractions, metric));
      } catch (const HomogeneityError&) {
        MetricResult na;
        na.metric = metric;
        na.method = name;
        na.not_applicable = true;
        out.push_back(std::move(na));
      }
    }
  }
  return out;
}

inline std::string render_metrics_table(std::span<const MetricResult> results) {
  std::vector<std::string> methods;
  for (const MetricResult& r : results)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
  std::ostringstream os;
  os << "Method        KPM ^     KNM v     KAM ^     RAM v\n";
  for (const std::string& m : methods) {
    os << m;
    for (size_t pad = m.size(); pad < 14; ++pad) os << ' ';
    for (MaskMetric metric :
         {MaskMetric::KPM, MaskMetric::KNM, MaskMetric::KAM, MaskMetric::RAM}) {
      bool found = false;
      for (const MetricResult& r : results)
        if (r.method == m && r.metric == metric) {
          if (r.not_applicable) {
            os << "N/A       ";
          } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%-10.4f", r.auc);
            os << buf;
          }
          found = true;
          break;
        }
      if (!found) os << "-         ";
    }
    os << '\n';
  }
  return os.str();
}

inline void write_metrics_csv(const std::string& path, std::span<const MetricResult> results) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot open " + path + " for writing");
  out << "metric,method,fraction,value\n";
  out.precision(17);
  for (const MetricResult& r : results) {
    if (r.not_applicable) {
      out << to_string(r.metric) << ',' << r.method << ",,NA\n";
      continue;
    }
    for (const auto& [f, v] : r.curve)
      out << to_string(r.metric) << ',' << r.method << ',' << f << ',' << v << '\n';
  }
}

}  // namespace xgrad
