#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "keco/coreset.hpp"
#include "keco/embedding_store.hpp"
#include "keco/similarity.hpp"

namespace keco {

/// How a query picks the same-class coreset entry it updates.
enum class SelectStrategy {
  Rs,  // uniform random
  Ss,  // most similar key
  Ds,  // least similar key
};

std::string_view to_string(SelectStrategy s);
SelectStrategy parse_select_strategy(std::string_view s);

struct UpdateConfig {
  double alpha = 0.2;
  std::size_t epochs = 10;
  std::size_t batch_size = 1000;
  SelectStrategy strategy = SelectStrategy::Ds;
  std::uint64_t seed = 0;
  bool reshuffle_each_epoch = true;

  /// Throws InvalidConfig unless 0 <= alpha <= 1, epochs >= 1, batch_size >= 1.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Seed of the random-selection stream for one query. Keyed by position in the
/// run rather than by thread or call order.
std::uint64_t rs_stream_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch,
                             std::uint64_t sample_index);

/// Coreset index of the target for `query` among entries of its class.
/// SS/DS ties go to the lowest coreset index. Throws NoTargetForClass.
std::size_t select_target(const Coreset& coreset, const EmbeddingRecord& query, SelectStrategy strategy,
                          std::uint64_t rs_seed);

/// Splits `order` into consecutive batches of `batch_size`; the last batch
/// holds the remainder. Batch count is ceil(order.size() / batch_size).
std::vector<std::vector<std::size_t>> partition_batches(std::span<const std::size_t> order,
                                                        std::size_t batch_size);
/// Same, for the untapped pack in the given permutation.
std::vector<std::vector<std::size_t>> partition_batches(const EmbeddingPack& untapped, std::size_t batch_size,
                                                        std::span<const std::size_t> epoch_order);

/// Samples (untapped pack positions, ascending) grouped by target index.
struct BatchAssignment {
  std::map<std::size_t, std::vector<std::size_t>> groups;
};

/// Targets for every batch sample against the current keys. Read-only.
BatchAssignment assign_batch(const Coreset& coreset, const EmbeddingPack& untapped,
                             std::span<const std::size_t> batch, SelectStrategy strategy, std::uint64_t seed,
                             std::uint64_t epoch, std::uint64_t batch_index);

/// Mean of the embeddings at `positions`, accumulated in the given order.
std::vector<double> group_mean(const EmbeddingPack& pack, std::span<const std::size_t> positions);

/// k' = (1 - alpha) k + alpha * mean.
std::vector<double> damped_step(std::span<const double> key, std::span<const double> mean, double alpha);

/// One synchronous mini-batch step: assign all samples against batch-start
/// keys, then move each targeted key toward its group's feature mean.
/// Returns the assignment that was applied.
BatchAssignment apply_batch_update(Coreset& coreset, const EmbeddingPack& untapped,
                                   std::span<const std::size_t> batch, SelectStrategy strategy, double alpha,
                                   std::uint64_t seed = 0, std::uint64_t epoch = 0, std::uint64_t batch_index = 0);

/// Streaming step: select a target for `sample` and apply
/// k' = (1 - alpha) k + alpha * phi(sample). Returns the updated index.
std::size_t online_update(Coreset& coreset, const EmbeddingRecord& sample, SelectStrategy strategy, double alpha,
                          std::uint64_t rs_seed);

struct EpochReport {
  std::size_t epoch = 0;
  std::size_t batches = 0;
  double mean_intra_class_cosine_dispersion = 0.0;
  std::size_t updated_entry_count = 0;  // distinct entries touched this epoch
};

struct RunReport {
  UpdateConfig config;
  std::uint64_t coreset_fingerprint = 0;  // input snapshot digest
  std::uint64_t untapped_fingerprint = 0;
  double initial_dispersion = 0.0;
  std::vector<EpochReport> per_epoch;
  std::vector<std::uint64_t> per_entry_updates;

  nlohmann::json to_json() const;
};

struct UpdateResult {
  Coreset coreset;
  RunReport report;
};

/// Runs `epochs` passes over the untapped set. Each epoch draws a seeded
/// permutation (identity when reshuffling is off), partitions it and applies
/// the batches in order.
UpdateResult run_update(Coreset coreset, const EmbeddingPack& untapped, const UpdateConfig& config);

}  // namespace keco
