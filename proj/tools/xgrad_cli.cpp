// Command-line harness: dataset generation/ingestion, training with
// attribution priors, attribution export, the axiom-conformance suite, the
// masking benchmark, IG convergence sweeps, and the contrast probe. Every
// run writes its resolved configuration and seed into the output directory
// so it can be replayed byte-identically.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xgrad/attribution.hpp"
#include "xgrad/axioms.hpp"
#include "xgrad/dataset.hpp"
#include "xgrad/metrics.hpp"
#include "xgrad/network.hpp"
#include "xgrad/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xgrad;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheckFailed = 3;

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", std::localtime(&t));
  return buf;
}

fs::path make_run_dir(const std::string& out, const std::string& command) {
  fs::path dir = out.empty() ? fs::path("runs") / (command + "-" + timestamp()) : fs::path(out);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw ValueError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// shared option blocks

struct DataOptions {
  std::string csv_path;
  std::string label_column = "label";
  int64_t samples = 13000;
  int64_t features = 118;
  int64_t informative = 10;
  double shift = 1.4;
  double decay = 0.55;
  double noise = 1.0;
  int64_t block = 8;
  double rho = 0.6;
  double flip = 0.08;
  uint64_t seed = 42;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", csv_path, "CSV dataset path (otherwise a synthetic set is generated)");
    cmd->add_option("--label-column", label_column, "label column name for --data");
    cmd->add_option("--samples", samples, "synthetic: number of samples");
    cmd->add_option("--features", features, "synthetic: number of features");
    cmd->add_option("--informative", informative, "synthetic: informative feature count");
    cmd->add_option("--shift", shift, "synthetic: class-mean shift of the strongest feature");
    cmd->add_option("--decay", decay, "synthetic: geometric shift decay across informative features");
    cmd->add_option("--noise", noise, "synthetic: noise scale");
    cmd->add_option("--block", block, "synthetic: nuisance block size");
    cmd->add_option("--rho", rho, "synthetic: within-block correlation");
    cmd->add_option("--flip", flip, "synthetic: label flip fraction");
    cmd->add_option("--data-seed", seed, "synthetic: generator seed");
  }

  GeneratorSpec generator() const {
    GeneratorSpec gs;
    gs.n_samples = samples;
    gs.n_features = features;
    gs.n_informative = informative;
    gs.shift = shift;
    gs.shift_decay = decay;
    gs.noise = noise;
    gs.nuisance_block = block;
    gs.block_rho = rho;
    gs.label_flip = flip;
    return gs;
  }

  DatasetHandle load() const {
    if (!csv_path.empty()) return ingest_csv(csv_path, label_column);
    return generate_synthetic(generator(), seed);
  }

  json resolved() const {
    json j;
    if (!csv_path.empty()) {
      j["data"] = csv_path;
      j["label-column"] = label_column;
    } else {
      j["synthetic"] = {{"samples", samples}, {"features", features}, {"informative", informative},
                        {"shift", shift},     {"decay", decay},       {"noise", noise},
                        {"block", block},     {"rho", rho},           {"flip", flip},
                        {"seed", seed}};
    }
    return j;
  }
};

struct NetOptions {
  std::string model_path;
  std::vector<int64_t> hidden = {32};
  int64_t outputs = 1;
  bool bias = false;
  uint64_t init_seed = 42;

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", model_path, "load a serialized network instead of building one");
    cmd->add_option("--mlp", hidden, "hidden layer widths for a fresh MLP")->delimiter(',');
    cmd->add_option("--outputs", outputs, "output dimension for a fresh MLP");
    cmd->add_flag("--bias,!--no-bias", bias, "build the MLP with bias terms");
    cmd->add_option("--init-seed", init_seed, "fresh MLP parameter seed");
  }

  Network build(int64_t input_dim) const {
    if (!model_path.empty()) return load_network(model_path);
    return init(make_mlp(input_dim, hidden, outputs, bias), init_seed);
  }

  json resolved() const {
    json j;
    if (!model_path.empty()) {
      j["model"] = model_path;
    } else {
      j["mlp"] = {{"hidden", hidden}, {"outputs", outputs}, {"bias", bias}, {"init-seed", init_seed}};
    }
    return j;
  }
};

AttrFn attr_fn_for(const std::string& key, int64_t ig_steps, int64_t eg_refs, uint64_t seed) {
  if (key == "grad")
    return [](const Network& net, const Tensor& x, int64_t t) { return grad_attr(net, x, t); };
  if (key == "ixg")
    return [](const Network& net, const Tensor& x, int64_t t) { return input_x_grad(net, x, t); };
  if (key == "xg")
    return [](const Network& net, const Tensor& x, int64_t t) { return x_gradient(net, x, t); };
  if (key == "ig")
    return [ig_steps](const Network& net, const Tensor& x, int64_t t) {
      return integrated_gradients(net, x, Tensor::zeros(x.shape), ig_steps, t);
    };
  if (key == "eg")
    return [eg_refs, seed, calls = std::make_shared<uint64_t>(0)](const Network& net,
                                                                  const Tensor& x, int64_t t) {
      Rng rng(derive_seed(seed, "eg-refs", (*calls)++));
      std::vector<Tensor> refs;
      for (int64_t k = 0; k < eg_refs; ++k) {
        Tensor r = Tensor::zeros(x.shape);
        for (double& v : r.data) v = rng.normal();
        refs.push_back(std::move(r));
      }
      return expected_gradients(net, x, refs, rng.next_u64(), t);
    };
  if (key == "rrr")
    return [](const Network& net, const Tensor& x, int64_t t) { return rrr_attr(net, x, t, true); };
  if (key == "random")
    return [seed, calls = std::make_shared<uint64_t>(0)](const Network&, const Tensor& x,
                                                         int64_t) {
      return random_attr(x, derive_seed(seed, "random", (*calls)++));
    };
  throw ValueError("unknown attribution method: " + key);
}

// ---------------------------------------------------------------------------
// subcommand payloads

struct TrainArgs {
  DataOptions data;
  NetOptions net;
  std::string out;
  int64_t epochs = 40;
  int64_t batch_size = 16;
  double lr = 1e-3;
  std::string optimizer = "adam";
  std::string loss = "bce";
  uint64_t seed = 42;
  std::string prior_method;  // empty = unregularized
  std::string prior_kind = "gini";
  double lambda = 1.0;
  int64_t eg_refs = 1;
  std::vector<int64_t> masked_features;
  double val_fraction = 0.2;
};

int run_train(const TrainArgs& a) {
  DatasetHandle full = a.data.load();
  const int64_t n_val = static_cast<int64_t>(static_cast<double>(full.num_samples()) * a.val_fraction);
  Rng split(derive_seed(a.seed, "split"));
  std::vector<int64_t> perm = split.permutation(full.num_samples());
  DatasetHandle val = subset(full, std::span<const int64_t>(perm.data(), static_cast<size_t>(n_val)));
  DatasetHandle train_ds = subset(
      full, std::span<const int64_t>(perm.data() + n_val, static_cast<size_t>(full.num_samples() - n_val)));

  Network net0 = a.net.build(full.num_features());
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;
  tc.optimizer = a.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  tc.loss = a.loss == "softmax" ? LossKind::SoftmaxCrossEntropy : LossKind::BinaryCrossEntropy;
  tc.seed = a.seed;

  PriorConfig pc;
  const bool use_prior = !a.prior_method.empty();
  if (use_prior) {
    pc.method = a.prior_method == "grad"  ? PriorAttrMethod::Grad
                : a.prior_method == "rrr" ? PriorAttrMethod::Rrr
                : a.prior_method == "eg"  ? PriorAttrMethod::Eg
                : a.prior_method == "xg"
                    ? PriorAttrMethod::Xg
                    : throw ValueError("unknown prior method: " + a.prior_method);
    pc.kind = a.prior_kind == "zero-mask" ? PriorKind::ZeroAttributionMask : PriorKind::SparsityGini;
    pc.lambda = a.lambda;
    pc.eg_references = a.eg_refs;
    pc.masked_features = a.masked_features;
  }

  fs::path dir = make_run_dir(a.out, "train");
  json cfg;
  cfg["command"] = "train";
  cfg["data"] = a.data.resolved();
  cfg["network"] = a.net.resolved();
  cfg["train"] = {{"epochs", a.epochs},      {"batch-size", a.batch_size}, {"learning-rate", a.lr},
                  {"optimizer", a.optimizer}, {"loss", a.loss},            {"seed", a.seed},
                  {"val-fraction", a.val_fraction}};
  if (use_prior)
    cfg["prior"] = {{"method", a.prior_method}, {"kind", a.prior_kind},
                    {"lambda", a.lambda},       {"eg-references", a.eg_refs},
                    {"masked-features", a.masked_features}};
  write_json(dir / "resolved_config.json", cfg);

  TrainResult res = train(net0, train_ds, &val, tc, use_prior ? &pc : nullptr);
  save_network(res.net, (dir / "model.json").string());
  std::ofstream trace(dir / "trace.csv");
  trace << "epoch,train_task_loss,train_total_loss,val_loss,val_metric\n";
  trace.precision(17);
  for (const EpochTrace& e : res.trace)
    trace << e.epoch << ',' << e.train_task_loss << ',' << e.train_total_loss << ',' << e.val_loss
          << ',' << e.val_metric << '\n';
  std::cout << "trained " << a.epochs << " epochs; final val metric "
            << res.trace.back().val_metric << "\n"
            << "results in " << dir.string() << "\n";
  return kExitOk;
}

struct AttributeArgs {
  DataOptions data;
  NetOptions net;
  std::string out;
  std::vector<std::string> methods = {"xg"};
  int64_t limit = 100;
  int64_t ig_steps = 128;
  int64_t eg_refs = 1;
  int64_t target = -1;  // -1: use the sample label (or 0 for single-logit nets)
  uint64_t seed = 42;
};

int run_attribute(const AttributeArgs& a) {
  DatasetHandle ds = a.data.load();
  Network net = a.net.build(ds.num_features());
  const int64_t count = std::min<int64_t>(a.limit, ds.num_samples());
  fs::path dir = make_run_dir(a.out, "attribute");

  json cfg;
  cfg["command"] = "attribute";
  cfg["data"] = a.data.resolved();
  cfg["network"] = a.net.resolved();
  cfg["methods"] = a.methods;
  cfg["limit"] = a.limit;
  cfg["ig-steps"] = a.ig_steps;
  cfg["eg-references"] = a.eg_refs;
  cfg["target"] = a.target;
  cfg["seed"] = a.seed;
  write_json(dir / "resolved_config.json", cfg);

  json timing = json::object();
  for (const std::string& key : a.methods) {
    AttrFn fn = attr_fn_for(key, a.ig_steps, a.eg_refs, a.seed);
    std::vector<Attribution> attrs;
    const auto t0 = std::chrono::steady_clock::now();
    for (int64_t i = 0; i < count; ++i) {
      const Tensor x = ds.sample(i);
      const int64_t target = a.target >= 0                ? a.target
                             : net.spec.output_dim == 1   ? 0
                                                          : ds.labels[static_cast<size_t>(i)];
      attrs.push_back(fn(net, x, target));
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(count);
    timing[key] = ms;
    write_attributions_csv((dir / (key + ".csv")).string(), attrs, ds.feature_names);
    json jattrs = json::array();
    for (const Attribution& at : attrs) jattrs.push_back(attribution_to_json(at));
    write_json(dir / (key + ".json"), jattrs);
    std::cout << key << ": " << count << " attributions, mean " << ms << " ms/call\n";
  }
  // wall-clock means are hardware-dependent: informational only, kept out of
  // the replay-stable result files
  write_json(dir / "timing.json", timing);
  std::cout << "results in " << dir.string() << "\n";
  return kExitOk;
}

struct AxiomsArgs {
  std::string out;
  std::vector<std::string> methods = default_suite_methods();
  int64_t trials = 100;
  uint64_t seed = 42;
  int threads = 0;
};

int run_axioms(const AxiomsArgs& a) {
  fs::path dir = make_run_dir(a.out, "axioms");
  json cfg;
  cfg["command"] = "axioms";
  cfg["methods"] = a.methods;
  cfg["trials"] = a.trials;
  cfg["seed"] = a.seed;
  write_json(dir / "resolved_config.json", cfg);

  std::vector<AxiomReport> reports = run_axiom_suite(a.methods, a.trials, a.seed, a.threads);
  const std::string table = render_axiom_table(reports);
  std::cout << table;
  write_json(dir / "axioms.json", reports_to_json(reports));
  std::ofstream tf(dir / "table.txt");
  tf << table;
  std::cout << "results in " << dir.string() << "\n";
  return matches_expectations(reports) ? kExitOk : kExitCheckFailed;
}

struct MetricsArgs {
  DataOptions data;
  NetOptions net;
  std::string out;
  std::vector<std::string> methods = {"xg", "ig", "grad", "eg", "random"};
  std::vector<double> fractions = default_fractions();
  std::string mask = "mean";
  int64_t limit = 100;
  int64_t ig_steps = 128;
  int64_t eg_refs = 1;
  uint64_t seed = 42;
};

int run_metrics(const MetricsArgs& a) {
  DatasetHandle full = a.data.load();
  std::vector<int64_t> head(static_cast<size_t>(std::min<int64_t>(a.limit, full.num_samples())));
  for (size_t i = 0; i < head.size(); ++i) head[i] = static_cast<int64_t>(i);
  DatasetHandle ds = subset(full, head);
  Network net = a.net.build(ds.num_features());
  MaskFn mask = a.mask == "zero" ? MaskFn::fixed_reference(Tensor::zeros({ds.num_features()}))
                                 : MaskFn::mean_substitution(ds);
  fs::path dir = make_run_dir(a.out, "metrics");
  json cfg;
  cfg["command"] = "metrics";
  cfg["data"] = a.data.resolved();
  cfg["network"] = a.net.resolved();
  cfg["methods"] = a.methods;
  cfg["fractions"] = a.fractions;
  cfg["mask"] = a.mask;
  cfg["limit"] = a.limit;
  cfg["ig-steps"] = a.ig_steps;
  cfg["eg-references"] = a.eg_refs;
  cfg["seed"] = a.seed;
  write_json(dir / "resolved_config.json", cfg);

  std::vector<std::pair<std::string, AttrFn>> methods;
  for (const std::string& key : a.methods)
    methods.emplace_back(key, attr_fn_for(key, a.ig_steps, a.eg_refs, a.seed));
  std::vector<MetricResult> results = benchmark_table(net, ds, methods, mask, a.fractions);
  write_metrics_csv((dir / "metrics.csv").string(), results);
  const std::string table = render_metrics_table(results);
  std::ofstream tf(dir / "table.txt");
  tf << table;
  std::cout << table << "results in " << dir.string() << "\n";
  return kExitOk;
}

struct SparsityArgs {
  DataOptions data;
  std::string out;
  int64_t repeats = 50;
  int64_t train_size = 100;
  std::vector<int64_t> hidden = {64};
  int64_t epochs = 96;
  int64_t batch_size = 16;
  double lr = 1e-3;
  uint64_t seed = 42;
  int threads = 0;
  int64_t val_size = 0;  // 0: same as train size
  std::vector<int64_t> eg_sweep = {1, 4, 16, 32};
  // per-method defaults from the benchmark's lambda search
  double lambda_xg = 0.07, lambda_grad = 0.07, lambda_eg = 0.10, lambda_rrr = 0.07;
};

int run_sparsity(const SparsityArgs& a) {
  DatasetHandle ds = a.data.load();
  NetworkSpec spec = make_mlp(ds.num_features(), a.hidden, 1, true);
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;

  std::vector<ExperimentArm> arms;
  arms.push_back({"unreg", std::nullopt, false});
  arms.push_back({"unreg-nobias", std::nullopt, true});
  PriorConfig grad_pc;
  grad_pc.method = PriorAttrMethod::Grad;
  grad_pc.lambda = a.lambda_grad;
  arms.push_back({"grad-prior", grad_pc, false});
  PriorConfig rrr_pc;
  rrr_pc.method = PriorAttrMethod::Rrr;
  rrr_pc.lambda = a.lambda_rrr;
  arms.push_back({"rrr-prior", rrr_pc, false});
  PriorConfig xg_pc;
  xg_pc.method = PriorAttrMethod::Xg;
  xg_pc.lambda = a.lambda_xg;
  arms.push_back({"xg-prior-nobias", xg_pc, true});
  for (int64_t k : a.eg_sweep) {
    PriorConfig eg_pc;
    eg_pc.method = PriorAttrMethod::Eg;
    eg_pc.lambda = a.lambda_eg;
    eg_pc.eg_references = k;
    arms.push_back({"eg" + std::to_string(k) + "-prior", eg_pc, false});
  }

  fs::path dir = make_run_dir(a.out, "sparsity-bench");
  json cfg;
  cfg["command"] = "sparsity-bench";
  cfg["data"] = a.data.resolved();
  cfg["repeats"] = a.repeats;
  cfg["train-size"] = a.train_size;
  cfg["val-size"] = a.val_size;
  cfg["hidden"] = a.hidden;
  cfg["train"] = {{"epochs", a.epochs}, {"batch-size", a.batch_size}, {"learning-rate", a.lr}};
  cfg["lambdas"] = {{"xg", a.lambda_xg}, {"grad", a.lambda_grad}, {"eg", a.lambda_eg}, {"rrr", a.lambda_rrr}};
  cfg["eg-sweep"] = a.eg_sweep;
  cfg["seed"] = a.seed;
  write_json(dir / "resolved_config.json", cfg);

  std::vector<ArmSummary> summary = subsample_experiment(ds, spec, a.repeats, a.train_size, arms,
                                                         tc, a.seed, a.threads, a.val_size);

  std::ofstream csv(dir / "sparsity.csv");
  csv << "arm,repeat,roc_auc\n";
  csv.precision(17);
  for (const ArmSummary& s : summary)
    for (size_t r = 0; r < s.aucs.size(); ++r) csv << s.name << ',' << r << ',' << s.aucs[r] << '\n';
  json agg = json::array();
  for (const ArmSummary& s : summary) {
    agg.push_back({{"arm", s.name}, {"mean", s.mean}, {"sem2", s.sem2}});
    std::printf("%-18s mean ROC-AUC %.4f +- %.4f (2 SEM)\n", s.name.c_str(), s.mean, s.sem2);
  }
  write_json(dir / "summary.json", agg);
  std::cout << "results in " << dir.string() << "\n";
  return kExitOk;
}

struct ConvergenceArgs {
  DataOptions data;
  NetOptions net;
  std::string out;
  std::vector<int64_t> steps_list = {1, 2, 4, 8, 16, 32, 64, 128, 256};
  int64_t oracle_steps = 10000;
  int64_t inputs = 100;
  uint64_t seed = 42;
};

int run_ig_convergence(const ConvergenceArgs& a) {
  DataOptions data = a.data;
  data.samples = std::max<int64_t>(data.samples, a.inputs);
  DatasetHandle ds = data.load();
  NetOptions nopt = a.net;
  Network net;
  if (nopt.model_path.empty()) {
    // the sweep targets a regular biased net; init() zeroes biases, which
    // would leave the net numerically homogeneous and the sweep trivial
    nopt.bias = true;
    net = random_network(make_mlp(ds.num_features(), nopt.hidden, nopt.outputs, true),
                         nopt.init_seed);
  } else {
    net = nopt.build(ds.num_features());
  }

  fs::path dir = make_run_dir(a.out, "ig-convergence");
  json cfg;
  cfg["command"] = "ig-convergence";
  cfg["data"] = data.resolved();
  cfg["network"] = nopt.resolved();
  cfg["steps-list"] = a.steps_list;
  cfg["oracle-steps"] = a.oracle_steps;
  cfg["inputs"] = a.inputs;
  cfg["seed"] = a.seed;
  write_json(dir / "resolved_config.json", cfg);

  const int64_t count = std::min<int64_t>(a.inputs, ds.num_samples());
  std::vector<Tensor> oracle(static_cast<size_t>(count));
  double scale = 0.0;
  for (int64_t i = 0; i < count; ++i) {
    const Tensor x = ds.sample(i);
    oracle[static_cast<size_t>(i)] =
        integrated_gradients(net, x, Tensor::zeros(x.shape), a.oracle_steps).values;
    for (double v : oracle[static_cast<size_t>(i)].data) scale += std::abs(v);
  }
  scale /= static_cast<double>(count * ds.num_features());

  std::ofstream csv(dir / "convergence.csv");
  csv << "steps,mean_abs_diff,relative_to_scale\n";
  csv.precision(17);
  for (int64_t steps : a.steps_list) {
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) {
      const Tensor x = ds.sample(i);
      Attribution approx = integrated_gradients(net, x, Tensor::zeros(x.shape), steps);
      for (int64_t j = 0; j < ds.num_features(); ++j)
        acc += std::abs(approx.values[j] - oracle[static_cast<size_t>(i)][j]);
    }
    const double mean_diff = acc / static_cast<double>(count * ds.num_features());
    csv << steps << ',' << mean_diff << ',' << mean_diff / scale << '\n';
    std::printf("steps %5lld  mean abs diff %.3e  (%.4f of attribution scale)\n",
                static_cast<long long>(steps), mean_diff, mean_diff / scale);
  }
  std::cout << "results in " << dir.string() << "\n";
  return kExitOk;
}

struct ContrastArgs {
  DataOptions data;
  NetOptions net;
  std::string out;
  std::vector<double> alphas = {0.1, 0.3, 0.5, 1.0, 2.0};
  int64_t limit = 500;
};

int run_contrast(const ContrastArgs& a) {
  DatasetHandle full = a.data.load();
  std::vector<int64_t> head(static_cast<size_t>(std::min<int64_t>(a.limit, full.num_samples())));
  for (size_t i = 0; i < head.size(); ++i) head[i] = static_cast<int64_t>(i);
  DatasetHandle ds = subset(full, head);
  Network net = a.net.build(ds.num_features());

  fs::path dir = make_run_dir(a.out, "contrast-probe");
  json cfg;
  cfg["command"] = "contrast-probe";
  cfg["data"] = a.data.resolved();
  cfg["network"] = a.net.resolved();
  cfg["alphas"] = a.alphas;
  cfg["limit"] = a.limit;
  write_json(dir / "resolved_config.json", cfg);

  std::vector<double> acc = contrast_equivariance_probe(net, ds, a.alphas);
  std::ofstream csv(dir / "contrast.csv");
  csv << "alpha,accuracy\n";
  csv.precision(17);
  for (size_t i = 0; i < acc.size(); ++i) {
    csv << a.alphas[i] << ',' << acc[i] << '\n';
    std::printf("alpha %.2f  accuracy %.4f\n", a.alphas[i], acc[i]);
  }
  const bool homogeneous = classify_homogeneity(net.spec).homogeneous;
  std::cout << (homogeneous ? "homogeneous network: accuracies are provably constant\n"
                            : "biased network: accuracies may drift with contrast\n")
            << "results in " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-attribution toolkit: homogeneous networks, closed-form attribution, "
               "axiom checks, attribution-prior training, masking benchmarks"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a network, optionally with an attribution prior");
  train_args.data.attach(train_cmd);
  train_args.net.attach(train_cmd);
  train_cmd->add_option("--out", train_args.out, "output directory");
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--batch-size", train_args.batch_size);
  train_cmd->add_option("--lr", train_args.lr);
  train_cmd->add_option("--optimizer", train_args.optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  train_cmd->add_option("--loss", train_args.loss)->check(CLI::IsMember({"bce", "softmax"}));
  train_cmd->add_option("--seed", train_args.seed);
  train_cmd->add_option("--prior-method", train_args.prior_method)
      ->check(CLI::IsMember({"grad", "rrr", "eg", "xg"}));
  train_cmd->add_option("--prior-kind", train_args.prior_kind)->check(CLI::IsMember({"gini", "zero-mask"}));
  train_cmd->add_option("--lambda", train_args.lambda);
  train_cmd->add_option("--eg-refs", train_args.eg_refs);
  train_cmd->add_option("--masked-features", train_args.masked_features)->delimiter(',');
  train_cmd->add_option("--val-fraction", train_args.val_fraction);

  AttributeArgs attr_args;
  CLI::App* attr_cmd = app.add_subcommand("attribute", "export per-sample attributions as CSV");
  attr_args.data.attach(attr_cmd);
  attr_args.net.attach(attr_cmd);
  attr_cmd->add_option("--out", attr_args.out);
  attr_cmd->add_option("--methods", attr_args.methods)->delimiter(',');
  attr_cmd->add_option("--limit", attr_args.limit);
  attr_cmd->add_option("--steps", attr_args.ig_steps);
  attr_cmd->add_option("--eg-refs", attr_args.eg_refs);
  attr_cmd->add_option("--target", attr_args.target);
  attr_cmd->add_option("--seed", attr_args.seed);

  AxiomsArgs ax_args;
  CLI::App* ax_cmd = app.add_subcommand("axioms", "run the executable axiom-conformance suite");
  ax_cmd->add_option("--out", ax_args.out);
  ax_cmd->add_option("--methods", ax_args.methods)->delimiter(',');
  ax_cmd->add_option("--trials", ax_args.trials);
  ax_cmd->add_option("--seed", ax_args.seed);
  ax_cmd->add_option("--threads", ax_args.threads);

  MetricsArgs met_args;
  CLI::App* met_cmd = app.add_subcommand("metrics", "masking-based attribution-quality benchmark");
  met_args.data.attach(met_cmd);
  met_args.net.attach(met_cmd);
  met_cmd->add_option("--out", met_args.out);
  met_cmd->add_option("--methods", met_args.methods)->delimiter(',');
  met_cmd->add_option("--fractions", met_args.fractions)->delimiter(',');
  met_cmd->add_option("--mask", met_args.mask)->check(CLI::IsMember({"mean", "zero"}));
  met_cmd->add_option("--limit", met_args.limit);
  met_cmd->add_option("--steps", met_args.ig_steps);
  met_cmd->add_option("--eg-refs", met_args.eg_refs);
  met_cmd->add_option("--seed", met_args.seed);

  SparsityArgs sp_args;
  CLI::App* sp_cmd = app.add_subcommand("sparsity-bench",
                                        "subsampled-dataset attribution-prior benchmark");
  sp_args.data.attach(sp_cmd);
  sp_cmd->add_option("--out", sp_args.out);
  sp_cmd->add_option("--repeats", sp_args.repeats);
  sp_cmd->add_option("--train-size", sp_args.train_size);
  sp_cmd->add_option("--val-size", sp_args.val_size, "held-out set size (default: train size)");
  sp_cmd->add_option("--hidden", sp_args.hidden)->delimiter(',');
  sp_cmd->add_option("--epochs", sp_args.epochs);
  sp_cmd->add_option("--batch-size", sp_args.batch_size);
  sp_cmd->add_option("--lr", sp_args.lr);
  sp_cmd->add_option("--seed", sp_args.seed);
  sp_cmd->add_option("--threads", sp_args.threads);
  sp_cmd->add_option("--eg-sweep", sp_args.eg_sweep)->delimiter(',');
  sp_cmd->add_option("--lambda-xg", sp_args.lambda_xg);
  sp_cmd->add_option("--lambda-grad", sp_args.lambda_grad);
  sp_cmd->add_option("--lambda-eg", sp_args.lambda_eg);
  sp_cmd->add_option("--lambda-rrr", sp_args.lambda_rrr);

  ConvergenceArgs cv_args;
  CLI::App* cv_cmd = app.add_subcommand("ig-convergence",
                                        "step sweep against a fine-grained oracle");
  cv_args.data.attach(cv_cmd);
  cv_args.net.attach(cv_cmd);
  cv_cmd->add_option("--out", cv_args.out);
  cv_cmd->add_option("--steps-list", cv_args.steps_list)->delimiter(',');
  cv_cmd->add_option("--oracle-steps", cv_args.oracle_steps);
  cv_cmd->add_option("--inputs", cv_args.inputs);
  cv_cmd->add_option("--seed", cv_args.seed);

  ContrastArgs ct_args;
  CLI::App* ct_cmd = app.add_subcommand("contrast-probe", "accuracy under multiplicative input scaling");
  ct_args.data.attach(ct_cmd);
  ct_args.net.attach(ct_cmd);
  ct_cmd->add_option("--out", ct_args.out);
  ct_cmd->add_option("--alphas", ct_args.alphas)->delimiter(',');
  ct_cmd->add_option("--limit", ct_args.limit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return run_train(train_args);
    if (attr_cmd->parsed()) return run_attribute(attr_args);
    if (ax_cmd->parsed()) return run_axioms(ax_args);
    if (met_cmd->parsed()) return run_metrics(met_args);
    if (sp_cmd->parsed()) return run_sparsity(sp_args);
    if (cv_cmd->parsed()) return run_ig_convergence(cv_args);
    if (ct_cmd->parsed()) return run_contrast(ct_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
