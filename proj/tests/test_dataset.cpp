#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "xgrad/dataset.hpp"
#include "xgrad/network.hpp"
#include "xgrad/training.hpp"

using namespace xgrad;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("ingest_csv: fixture, digest stability, errors") {
  const std::string path = "fixture.csv";
  write_file(path, "age,weight,label\n1,2.5,0\n3,4.5,1\n5,6.5,0\n");
  DatasetHandle ds = ingest_csv(path, "label");
  CHECK(ds.num_samples() == 3);
  CHECK(ds.num_features() == 2);
  CHECK(ds.feature_names == std::vector<std::string>{"age", "weight"});
  CHECK(ds.labels == std::vector<int64_t>{0, 1, 0});
  CHECK(ds.features.at(1, 1) == 4.5);

  DatasetHandle again = ingest_csv(path, "label");
  CHECK(ds.provenance == again.provenance);

  CHECK_THROWS_WITH_AS(ingest_csv(path, "target"), doctest::Contains("target"), ValueError);

  write_file(path, "a,label\n1,0\n2\n");
  CHECK_THROWS_WITH_AS(ingest_csv(path, "label"), doctest::Contains("line 3"), ValueError);

  write_file(path, "a,label\n1,0\nx,1\n");
  CHECK_THROWS_WITH_AS(ingest_csv(path, "label"), doctest::Contains("column 'a'"), ValueError);
  std::remove(path.c_str());
}

TEST_CASE("csv round trip") {
  GeneratorSpec gs;
  gs.n_samples = 20;
  gs.n_features = 5;
  gs.n_informative = 2;
  DatasetHandle ds = generate_synthetic(gs, 7);
  const std::string path = "roundtrip.csv";
  write_dataset_csv(path, ds);
  DatasetHandle back = ingest_csv(path, "label");
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  std::remove(path.c_str());
}

TEST_CASE("generate_synthetic: determinism and default profile") {
  GeneratorSpec gs;  // defaults mirror the benchmark profile
  CHECK(gs.n_features == 118);
  CHECK(gs.n_informative == 10);
  CHECK(gs.n_samples == 13000);
  gs.n_samples = 200;
  DatasetHandle a = generate_synthetic(gs, 42);
  DatasetHandle b = generate_synthetic(gs, 42);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  DatasetHandle c = generate_synthetic(gs, 43);
  CHECK(a.features != c.features);

  GeneratorSpec bad;
  bad.n_informative = 200;
  CHECK_THROWS_AS(generate_synthetic(bad, 1), ValueError);
}

TEST_CASE("generate_synthetic: zero informative features means chance-level AUC") {
  GeneratorSpec gs;
  gs.n_samples = 1200;
  gs.n_features = 12;
  gs.n_informative = 0;
  gs.label_flip = 0.0;
  DatasetHandle ds = generate_synthetic(gs, 5);
  // score each sample by a fixed linear probe; labels are independent of x
  Rng rng(6);
  std::vector<double> w(12);
  for (double& v : w) v = rng.normal();
  std::vector<double> scores(static_cast<size_t>(ds.num_samples()));
  for (int64_t i = 0; i < ds.num_samples(); ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < 12; ++j) s += w[static_cast<size_t>(j)] * ds.features.at(i, j);
    scores[static_cast<size_t>(i)] = s;
  }
  const double auc = roc_auc(scores, ds.labels);
  CHECK(auc == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("generate_synthetic: informative features separate the classes") {
  GeneratorSpec gs;
  gs.n_samples = 800;
  gs.n_features = 20;
  gs.n_informative = 6;
  gs.shift = 0.6;
  gs.label_flip = 0.0;
  DatasetHandle ds = generate_synthetic(gs, 11);
  double m0 = 0.0, m1 = 0.0;
  int64_t c0 = 0, c1 = 0;
  for (int64_t i = 0; i < ds.num_samples(); ++i) {
    if (ds.labels[static_cast<size_t>(i)] == 1) {
      m1 += ds.features.at(i, 0);
      ++c1;
    } else {
      m0 += ds.features.at(i, 0);
      ++c0;
    }
  }
  CHECK(std::abs(m1 / static_cast<double>(c1) - m0 / static_cast<double>(c0)) > 0.5);
}

TEST_CASE("subset and column means") {
  GeneratorSpec gs;
  gs.n_samples = 10;
  gs.n_features = 3;
  gs.n_informative = 1;
  DatasetHandle ds = generate_synthetic(gs, 3);
  std::vector<int64_t> idx = {2, 5, 7};
  DatasetHandle sub = subset(ds, idx);
  CHECK(sub.num_samples() == 3);
  CHECK(sub.features.at(1, 2) == ds.features.at(5, 2));
  CHECK(sub.labels[0] == ds.labels[2]);

  Tensor means = column_means(ds);
  double acc = 0.0;
  for (int64_t i = 0; i < 10; ++i) acc += ds.features.at(i, 1);
  CHECK(means[1] == doctest::Approx(acc / 10.0));
}
