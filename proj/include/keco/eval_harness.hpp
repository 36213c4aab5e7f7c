#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "keco/coreset.hpp"
#include "keco/embedding_store.hpp"
#include "keco/engine.hpp"
#include "keco/init_strategies.hpp"
#include "keco/retrieval.hpp"

namespace keco {

/// Majority label among the top-k retrieved entries. Ties go to the tied label
/// whose best-ranked entry is most similar.
std::string knn_predict(const Coreset& source, const EmbeddingRecord& query, std::size_t k,
                        SimilarityMetric metric = SimilarityMetric::Cosine);

/// Fraction of `test` classified correctly by knn_predict.
double top1_accuracy(const Coreset& source, const EmbeddingPack& test, std::size_t k,
                     SimilarityMetric metric = SimilarityMetric::Cosine);

enum class Condition { FsIc, FsIs, KecoRs, KecoSs, KecoDs };

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view s);

struct ExperimentSpec {
  std::string name = "experiment";
  EmbeddingPack support;
  EmbeddingPack test;
  InitSpec init;
  UpdateConfig update;  // strategy is set per KeCO condition
  std::vector<std::size_t> shots = {2, 4};
  std::vector<Condition> conditions = {Condition::FsIc, Condition::FsIs, Condition::KecoRs, Condition::KecoSs,
                                       Condition::KecoDs};
  /// When set, the untapped set keeps round(ratio * class coreset count)
  /// samples per class (pack order) and the rest of the support is dropped.
  std::optional<double> untapped_ratio;
  SimilarityMetric metric = SimilarityMetric::Cosine;
};

struct ConditionResult {
  Condition condition;
  std::vector<double> accuracy;  // aligned with ExperimentSpec::shots
  double dispersion_before = 0.0;
  double dispersion_after = 0.0;
  std::size_t source_size = 0;  // entries retrieved from
  std::optional<Coreset> coreset;
  std::optional<RunReport> report;
};

struct ExperimentResults {
  std::string name;
  std::vector<std::size_t> shots;
  std::size_t coreset_size = 0;
  std::size_t untapped_size = 0;
  nlohmann::json config;
  std::vector<ConditionResult> rows;

  const ConditionResult& row(Condition c) const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

ExperimentResults evaluate(const ExperimentSpec& spec);

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t support_per_class = 100;
  std::size_t test_per_class = 20;
  std::size_t dim = 32;
  double center_scale = 1.0;  // norm of every class center
  double noise_scale = 0.5;   // per-coordinate standard deviation
  std::uint64_t seed = 42;

  bool noise_dominates() const { return noise_scale >= center_scale; }
  void validate() const;
};

/// Class centers are uniform on the sphere of radius center_scale; samples
/// are center + N(0, noise_scale^2 I). Class-major record order.
std::pair<EmbeddingPack, EmbeddingPack> generate_synthetic(const SyntheticSpec& spec);

enum class SweepAxis { Alpha, Epochs, Batch, Ratio, CoresetSize };

std::string_view to_string(SweepAxis a);
SweepAxis parse_sweep_axis(std::string_view s);
void apply_axis(ExperimentSpec& spec, SweepAxis axis, double value);

struct SweepRow {
  std::vector<std::pair<SweepAxis, double>> point;
  ExperimentResults results;
};

struct SweepTable {
  std::vector<SweepAxis> axes;
  std::vector<SweepRow> rows;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// evaluate() per value (cartesian product when a second axis is given).
SweepTable sweep(const ExperimentSpec& spec, SweepAxis axis, const std::vector<double>& values);
SweepTable sweep(const ExperimentSpec& spec, SweepAxis axis_a, const std::vector<double>& values_a,
                 SweepAxis axis_b, const std::vector<double>& values_b);

/// "label,count,mean_pairwise_cosine_distance,mean_distance_to_centroid".
std::string dispersion_csv(const DispersionStats& stats);

/// Keys projected on their top two principal components:
/// "index,source_id,label,pc1,pc2". Component signs are fixed so the largest
/// loading of each axis is positive.
std::string pca_csv(const Coreset& coreset);

}  // namespace keco
