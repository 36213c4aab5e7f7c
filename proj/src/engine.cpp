#include "keco/engine.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "keco/error.hpp"
#include "keco/io_util.hpp"
#include "keco/parallel.hpp"
#include "keco/rng.hpp"
#include "keco/vec_math.hpp"

namespace keco {

namespace {

constexpr std::uint64_t kTargetDrawTag = 0x54415247;  // "TARG"
constexpr std::uint64_t kEpochOrderTag = 0x45504f43;  // "EPOC"

}  // namespace

std::string_view to_string(SelectStrategy s) {
  switch (s) {
    case SelectStrategy::Rs: return "rs";
    case SelectStrategy::Ss: return "ss";
    case SelectStrategy::Ds: return "ds";
  }
  return "?";
}

SelectStrategy parse_select_strategy(std::string_view s) {
  if (s == "rs") return SelectStrategy::Rs;
  if (s == "ss") return SelectStrategy::Ss;
  if (s == "ds") return SelectStrategy::Ds;
  throw Error(ErrorCode::InvalidConfig, "unknown selection strategy '" + std::string(s) + "' (rs|ss|ds)");
}

void UpdateConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
}

nlohmann::json UpdateConfig::to_json() const {
  return {{"alpha", alpha},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"strategy", to_string(strategy)},
          {"seed", seed},
          {"reshuffle_each_epoch", reshuffle_each_epoch}};
}

std::uint64_t rs_stream_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch,
                             std::uint64_t sample_index) {
  return derive_seed(seed, {kTargetDrawTag, epoch, batch, sample_index});
}

std::size_t select_target(const Coreset& coreset, const EmbeddingRecord& query, SelectStrategy strategy,
                          std::uint64_t rs_seed) {
  const auto ci = coreset.class_index(query.label);
  if (!ci) throw Error(ErrorCode::UnknownLabel, "query '" + query.id + "' label '" + query.label + "'");
  const auto& members = coreset.members(*ci);
  if (members.empty()) throw Error(ErrorCode::NoTargetForClass, "class '" + query.label + "'");

  if (strategy == SelectStrategy::Rs) {
    Rng rng(rs_seed);
    return members[static_cast<std::size_t>(rng.uniform_index(members.size()))];
  }
  std::size_t best = members.front();
  double best_score = cosine_similarity(coreset[best].key_view(), query.view());
  for (std::size_t m = 1; m < members.size(); ++m) {
    const double s = cosine_similarity(coreset[members[m]].key_view(), query.view());
    const bool better = strategy == SelectStrategy::Ss ? s > best_score : s < best_score;
    if (better) {
      best = members[m];
      best_score = s;
    }
  }
  return best;
}

std::vector<std::vector<std::size_t>> partition_batches(std::span<const std::size_t> order,
                                                        std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> partition_batches(const EmbeddingPack& untapped, std::size_t batch_size,
                                                        std::span<const std::size_t> epoch_order) {
  if (epoch_order.size() != untapped.size())
    throw Error(ErrorCode::InvalidConfig, "epoch order is not a permutation of the untapped set");
  return partition_batches(epoch_order, batch_size);
}

BatchAssignment assign_batch(const Coreset& coreset, const EmbeddingPack& untapped,
                             std::span<const std::size_t> batch, SelectStrategy strategy, std::uint64_t seed,
                             std::uint64_t epoch, std::uint64_t batch_index) {
  std::vector<std::size_t> targets(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    const auto sample = batch[i];
    targets[i] = select_target(coreset, untapped[sample], strategy,
                               rs_stream_seed(seed, epoch, batch_index, sample));
  });
  BatchAssignment assignment;
  for (std::size_t i = 0; i < batch.size(); ++i) assignment.groups[targets[i]].push_back(batch[i]);
  for (auto& [target, samples] : assignment.groups) std::sort(samples.begin(), samples.end());
  return assignment;
}

std::vector<double> group_mean(const EmbeddingPack& pack, std::span<const std::size_t> positions) {
  std::vector<double> mean(pack.dim(), 0.0);
  for (auto p : positions) {
    const auto& v = pack[p].vector;
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += static_cast<double>(v[k]);
  }
  const auto count = static_cast<double>(positions.size());
  for (auto& m : mean) m /= count;
  return mean;
}

std::vector<double> damped_step(std::span<const double> key, std::span<const double> mean, double alpha) {
  std::vector<double> out(key.size());
  const double keep = 1.0 - alpha;
  for (std::size_t k = 0; k < key.size(); ++k) out[k] = keep * key[k] + alpha * mean[k];
  return out;
}

BatchAssignment apply_batch_update(Coreset& coreset, const EmbeddingPack& untapped,
                                   std::span<const std::size_t> batch, SelectStrategy strategy, double alpha,
                                   std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch_index) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in [0, 1]");
  auto assignment = assign_batch(coreset, untapped, batch, strategy, seed, epoch, batch_index);
  for (const auto& [target, samples] : assignment.groups) {
    const auto mean = group_mean(untapped, samples);
    coreset.set_key(target, damped_step(coreset[target].key_view(), mean, alpha));
    coreset.bump_updates(target);
  }
  return assignment;
}

std::size_t online_update(Coreset& coreset, const EmbeddingRecord& sample, SelectStrategy strategy, double alpha,
                          std::uint64_t rs_seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in [0, 1]");
  const auto target = select_target(coreset, sample, strategy, rs_seed);
  const auto feature = to_double(sample.view());
  coreset.set_key(target, damped_step(coreset[target].key_view(), feature, alpha));
  coreset.bump_updates(target);
  return target;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : per_epoch)
    epochs.push_back({{"epoch", e.epoch},
                      {"batches", e.batches},
                      {"mean_intra_class_cosine_dispersion", e.mean_intra_class_cosine_dispersion},
                      {"updated_entry_count", e.updated_entry_count}});
  return {{"config", config.to_json()},
          {"inputs", {{"coreset", io::hex64(coreset_fingerprint)}, {"untapped", io::hex64(untapped_fingerprint)}}},
          {"initial_dispersion", initial_dispersion},
          {"per_epoch", std::move(epochs)},
          {"per_entry_updates", per_entry_updates}};
}

UpdateResult run_update(Coreset coreset, const EmbeddingPack& untapped, const UpdateConfig& config) {
  config.validate();
  if (coreset.empty()) throw Error(ErrorCode::EmptyInput, "cannot update an empty coreset");
  if (untapped.dim() != coreset.dim())
    throw Error(ErrorCode::DimensionMismatch, "untapped dim " + std::to_string(untapped.dim()) +
                                                  " vs coreset dim " + std::to_string(coreset.dim()));
  for (const auto& label : untapped.labels())
    if (!coreset.class_index(label))
      throw Error(ErrorCode::UnknownLabel, "untapped label '" + label + "' not in coreset label space");

  RunReport report;
  report.config = config;
  report.coreset_fingerprint = io::fnv1a64(encode_snapshot(coreset));
  report.untapped_fingerprint = untapped.fingerprint();
  report.initial_dispersion = dispersion_stats(coreset).mean_cosine_dispersion;

  std::vector<std::size_t> identity(untapped.size());
  std::iota(identity.begin(), identity.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = identity;
    if (config.reshuffle_each_epoch) {
      Rng rng(derive_seed(config.seed, {kEpochOrderTag, epoch}));
      rng.shuffle(order);
    }
    const auto batches = partition_batches(untapped, config.batch_size, order);
    std::set<std::size_t> touched;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto assignment =
          apply_batch_update(coreset, untapped, batches[b], config.strategy, config.alpha, config.seed, epoch, b);
      for (const auto& [target, samples] : assignment.groups) touched.insert(target);
    }
    report.per_epoch.push_back({epoch + 1, batches.size(), dispersion_stats(coreset).mean_cosine_dispersion,
                                touched.size()});
  }
  for (const auto& e : coreset.entries()) report.per_entry_updates.push_back(e.updates_applied);
  return {std::move(coreset), std::move(report)};
}

}  // namespace keco
