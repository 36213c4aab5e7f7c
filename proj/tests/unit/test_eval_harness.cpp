#include <doctest.h>

#include <functional>
#include <sstream>

#include "keco/error.hpp"
#include "keco/eval_harness.hpp"
#include "test_support.hpp"

using namespace keco;
using keco::testing::make_pack;
using keco::testing::rec;

namespace {

Coreset keys(std::vector<std::pair<std::string, std::vector<double>>> entries) {
  std::vector<std::string> labels;
  for (const auto& [l, k] : entries)
    if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  Coreset c(entries.front().second.size(), labels, 0, "t");
  std::size_t i = 0;
  for (auto& [l, k] : entries) c.append({"k" + std::to_string(i++), l, k, 0});
  return c;
}

ExperimentSpec small_experiment(std::uint64_t seed = 42) {
  SyntheticSpec s;
  s.classes = 5;
  s.support_per_class = 30;
  s.test_per_class = 8;
  s.dim = 12;
  s.seed = seed;
  auto [support, test] = generate_synthetic(s);
  ExperimentSpec spec;
  spec.support = std::move(support);
  spec.test = std::move(test);
  spec.init.coreset_size = 10;
  spec.init.seed = seed;
  spec.update.epochs = 3;
  spec.update.batch_size = 20;
  spec.update.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("k-NN prediction examples") {
  const auto c = keys({{"a", {1, 0}}, {"b", {0.9, 0.1}}, {"b", {0.8, 0.2}}, {"a", {0, 1}}});
  const auto q = rec("q", "x", {1, 0});
  CHECK(knn_predict(c, q, 1) == "a");
  CHECK(knn_predict(c, q, 3) == "b");  // b holds two of the top three
  CHECK(knn_predict(c, q, 2) == "a");  // 1-1 tie: rank-1 label wins
  CHECK(knn_predict(c, q, 4) == "a");  // 2-2 tie: a owns rank 1
}

TEST_CASE("accuracy is 1 when test samples sit on coreset keys") {
  const auto pack = make_pack({rec("a", "x", {1, 0, 0}), rec("b", "y", {0, 1, 0}), rec("c", "z", {0, 0, 1})});
  const auto c = coreset_from_pack(pack, "t");
  CHECK(top1_accuracy(c, pack, 1) == 1.0);
  const auto wrong = make_pack({rec("q", "y", {1, 0.1f, 0})});
  CHECK(top1_accuracy(c, wrong, 1) == 0.0);
}

TEST_CASE("synthetic generator layout and determinism") {
  SyntheticSpec s;
  s.classes = 4;
  s.support_per_class = 7;
  s.test_per_class = 3;
  s.dim = 5;
  const auto [support, test] = generate_synthetic(s);
  CHECK(support.size() == 28);
  CHECK(test.size() == 12);
  CHECK(support.dim() == 5);
  CHECK(support.labels() == std::vector<std::string>{"class_000", "class_001", "class_002", "class_003"});
  CHECK(support[0].label == "class_000");
  CHECK(support[7].label == "class_001");  // class-major
  const auto [s2, t2] = generate_synthetic(s);
  CHECK(support == s2);
  CHECK(test == t2);
  s.seed = 43;
  CHECK_FALSE(generate_synthetic(s).first == support);

  SyntheticSpec bad;
  bad.classes = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("noiseless synthetic data is perfectly separable") {
  SyntheticSpec s;
  s.classes = 6;
  s.support_per_class = 5;
  s.test_per_class = 5;
  s.dim = 16;
  s.noise_scale = 0.0;
  const auto [support, test] = generate_synthetic(s);
  InitSpec init;
  init.coreset_size = 6;
  CHECK(top1_accuracy(init_random(support, init), test, 1) == 1.0);
  CHECK_FALSE(s.noise_dominates());
}

TEST_CASE("class centers sit on the sphere of radius center_scale") {
  SyntheticSpec s;
  s.classes = 3;
  s.support_per_class = 400;
  s.test_per_class = 1;
  s.dim = 8;
  s.center_scale = 2.0;
  s.noise_scale = 0.1;
  const auto [support, test] = generate_synthetic(s);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> mean(8, 0.0);
    for (std::size_t i = 0; i < 400; ++i)
      for (std::size_t d = 0; d < 8; ++d) mean[d] += support[c * 400 + i].vector[d] / 400.0;
    double n = 0;
    for (double v : mean) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(2.0).epsilon(0.02));
  }
}

TEST_CASE("evaluate: FS-IS equals FS-IC when nothing is untapped") {
  auto spec = small_experiment();
  spec.init.coreset_size = spec.support.size();
  spec.conditions = {Condition::FsIc, Condition::FsIs};
  const auto r = evaluate(spec);
  CHECK(r.row(Condition::FsIc).accuracy == r.row(Condition::FsIs).accuracy);
  CHECK(r.untapped_size == 0);
}

TEST_CASE("evaluate produces one row per condition and is deterministic") {
  const auto spec = small_experiment();
  const auto a = evaluate(spec);
  const auto b = evaluate(spec);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_text() == b.to_text());
  REQUIRE(a.rows.size() == 5);
  CHECK(a.coreset_size == 10);
  CHECK(a.untapped_size == 140);
  for (const auto& row : a.rows) {
    REQUIRE(row.accuracy.size() == 2);
    for (double acc : row.accuracy) {
      CHECK(acc >= 0.0);
      CHECK(acc <= 1.0);
    }
  }
  CHECK(a.row(Condition::FsIs).source_size == 150);
  CHECK(a.row(Condition::KecoDs).source_size == 10);
  CHECK(a.row(Condition::FsIc).dispersion_after == a.row(Condition::FsIc).dispersion_before);
  CHECK(a.row(Condition::KecoDs).report.has_value());
  const auto text = a.to_text();
  for (auto name : {"fs-ic", "fs-is", "keco-rs", "keco-ss", "keco-ds"}) CHECK(text.find(name) != std::string::npos);
}

TEST_CASE("untapped ratio trims per class") {
  auto spec = small_experiment();
  spec.untapped_ratio = 4.0;  // 2 coreset entries per class -> 8 untapped per class
  spec.conditions = {Condition::FsIs};
  const auto r = evaluate(spec);
  CHECK(r.untapped_size == 40);
  CHECK(r.row(Condition::FsIs).source_size == 50);
}

TEST_CASE("condition parsing") {
  CHECK(parse_condition("keco-ds") == Condition::KecoDs);
  CHECK(parse_condition("fs-ic") == Condition::FsIc);
  CHECK_THROWS_AS(parse_condition("nope"), Error);
  CHECK(to_string(Condition::FsIs) == "fs-is");
}

TEST_CASE("sweep over one and two axes") {
  auto spec = small_experiment();
  spec.conditions = {Condition::FsIc, Condition::KecoDs};
  spec.shots = {2};
  const auto t = sweep(spec, SweepAxis::Alpha, {0.0, 0.5});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].point[0].second == 0.0);
  // alpha 0 leaves keys unchanged, so KeCO-DS matches FS-IC.
  CHECK(t.rows[0].results.row(Condition::KecoDs).accuracy == t.rows[0].results.row(Condition::FsIc).accuracy);
  CHECK(t.rows[0].results.row(Condition::KecoDs).dispersion_after ==
        doctest::Approx(t.rows[0].results.row(Condition::KecoDs).dispersion_before));

  const auto grid = sweep(spec, SweepAxis::Epochs, {1, 2}, SweepAxis::Batch, {10, 50, 200});
  CHECK(grid.rows.size() == 6);
  CHECK(grid.axes.size() == 2);
  CHECK(grid.to_json().is_object());
  CHECK(grid.to_text().find("epochs") != std::string::npos);

  ExperimentSpec e = spec;
  apply_axis(e, SweepAxis::CoresetSize, 20);
  CHECK(e.init.coreset_size == 20);
  apply_axis(e, SweepAxis::Ratio, 2);
  CHECK(e.untapped_ratio == 2.0);
  CHECK(parse_sweep_axis("alpha") == SweepAxis::Alpha);
}

TEST_CASE("CSV exports") {
  const auto c = keys({{"a", {1, 0, 0}}, {"a", {0, 1, 0}}, {"b", {0, 0, 1}}, {"b", {1, 1, 1}}});
  const auto disp = dispersion_csv(dispersion_stats(c));
  std::istringstream in(disp);
  std::string line;
  std::getline(in, line);
  CHECK(line == "label,count,mean_pairwise_cosine_distance,mean_distance_to_centroid");
  std::getline(in, line);
  CHECK(line.rfind("a,2,", 0) == 0);

  const auto pca = pca_csv(c);
  std::istringstream pin(pca);
  std::getline(pin, line);
  CHECK(line == "index,source_id,label,pc1,pc2");
  std::size_t rows = 0;
  double sum1 = 0;
  while (std::getline(pin, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 5);
    sum1 += std::stod(cells[3]);
  }
  CHECK(rows == 4);
  CHECK(std::abs(sum1) < 1e-9);  // projections of centered keys
  CHECK(pca_csv(c) == pca);
}
