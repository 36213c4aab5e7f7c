#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "keco/coreset.hpp"
#include "keco/embedding_store.hpp"

namespace keco {

enum class InitStrategy { Random, KCenter, InfoScore };
enum class KCenterMetric { Euclidean, CosineDistance };

std::string_view to_string(InitStrategy s);
std::string_view to_string(KCenterMetric m);
InitStrategy parse_init_strategy(std::string_view s);
KCenterMetric parse_kcenter_metric(std::string_view s);

struct InitSpec {
  InitStrategy strategy = InitStrategy::Random;
  std::size_t coreset_size = 0;
  std::uint64_t seed = 0;
  bool allow_uneven = false;
  KCenterMetric kcenter_metric = KCenterMetric::Euclidean;
  std::optional<std::filesystem::path> scores_path;  // infoscore only

  /// Text stored as the coreset's config fingerprint.
  std::string describe() const;
};

/// Pairwise contribution scores c(e_p, e_q), computed by an external model.
struct ContributionMatrix {
  std::vector<std::string> ids;
  std::vector<double> values;  // row-major, ids.size() squared

  std::size_t size() const { return ids.size(); }
  double at(std::size_t p, std::size_t q) const { return values[p * ids.size() + q]; }
};

/// Reads `<stem>.scores.manifest.json` + `<stem>.scores.f64`. `path` may be the
/// stem or either file.
ContributionMatrix load_contribution_matrix(const std::filesystem::path& path);
void save_contribution_matrix(const ContributionMatrix& m, const std::filesystem::path& stem);

/// Reads JSONL rows {"id": str, "infoscore": float} of precomputed sums.
std::vector<std::pair<std::string, double>> load_infoscores_jsonl(const std::filesystem::path& path);

/// Per-record InfoScore aligned to pack order: the row sum of c(e, e') over
/// all e' != e. Matrix ids must be exactly the pack's ids (any order).
std::vector<double> infoscores(const EmbeddingPack& pack, const ContributionMatrix& matrix);

/// Per-class quota, indexed by pack label index. Without allow_uneven, m must
/// be divisible by the class count and every class must hold m/j samples.
/// With it, the remainder goes one each to the lexicographically-first labels.
std::vector<std::size_t> class_quotas(std::span<const std::string> labels, std::size_t coreset_size,
                                      bool allow_uneven);

Coreset init_random(const EmbeddingPack& pack, const InitSpec& spec);
Coreset init_kcenter(const EmbeddingPack& pack, const InitSpec& spec);
Coreset init_infoscore(const EmbeddingPack& pack, const ContributionMatrix& matrix, const InitSpec& spec);
/// Same selection from precomputed per-record scores (aligned to pack order).
Coreset init_infoscore(const EmbeddingPack& pack, std::span<const double> scores, const InitSpec& spec);

/// Dispatch on spec.strategy; infoscore reads spec.scores_path (matrix stem or
/// .jsonl of sums).
Coreset initialize(const EmbeddingPack& pack, const InitSpec& spec);

/// Greedy max-min selection over `points` starting from `first`. Returns
/// point indices in selection order. Candidates are scanned in index order and
/// replace the incumbent only on a strictly larger min-distance. When every
/// remaining point sits at distance 0 from the chosen set, the lowest-index
/// unchosen point is taken.
std::vector<std::size_t> kcenter_greedy(std::span<const std::vector<double>> points, std::size_t quota,
                                        std::size_t first, KCenterMetric metric);

double kcenter_distance(std::span<const double> a, std::span<const double> b, KCenterMetric metric);

// ---------------------------------------------------------------------------
// Streaming (filling-based) initialization

enum class FillResult { Added, Full };

class CoresetBuilder {
 public:
  CoresetBuilder(std::size_t dim, std::vector<std::string> labels, std::size_t coreset_size,
                 bool allow_uneven, std::string config_fingerprint);

  Coreset& coreset() { return coreset_; }
  const Coreset& coreset() const { return coreset_; }
  std::size_t quota(std::size_t class_idx) const { return quotas_[class_idx]; }
  bool class_full(std::size_t class_idx) const;

  /// Validates quotas were met (InsufficientStream unless allow_uneven, in which
  /// case shortfalls are recorded) and returns the coreset.
  Coreset finish() &&;

 private:
  friend FillResult filling_init_step(CoresetBuilder&, const EmbeddingRecord&);
  Coreset coreset_;
  std::vector<std::size_t> quotas_;
  bool allow_uneven_;
};

/// Adds the sample (key = embedding) when its class is below quota; otherwise
/// reports Full and leaves the coreset untouched.
FillResult filling_init_step(CoresetBuilder& builder, const EmbeddingRecord& sample);

}  // namespace keco
