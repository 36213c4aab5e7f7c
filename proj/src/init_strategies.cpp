#include "keco/init_strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "keco/error.hpp"
#include "keco/io_util.hpp"
#include "keco/parallel.hpp"
#include "keco/rng.hpp"
#include "keco/similarity.hpp"
#include "keco/vec_math.hpp"

namespace keco {

using nlohmann::json;

namespace {

// Stream tags keep the per-strategy generators unrelated.
constexpr std::uint64_t kRandomInitTag = 0x52414e44;   // "RAND"
constexpr std::uint64_t kKCenterInitTag = 0x4b43454e;  // "KCEN"

}  // namespace

std::string_view to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::Random: return "random";
    case InitStrategy::KCenter: return "kcenter";
    case InitStrategy::InfoScore: return "infoscore";
  }
  return "?";
}

std::string_view to_string(KCenterMetric m) {
  return m == KCenterMetric::Euclidean ? "euclidean" : "cosine_distance";
}

InitStrategy parse_init_strategy(std::string_view s) {
  if (s == "random") return InitStrategy::Random;
  if (s == "kcenter") return InitStrategy::KCenter;
  if (s == "infoscore") return InitStrategy::InfoScore;
  throw Error(ErrorCode::InvalidConfig, "unknown init strategy '" + std::string(s) + "'");
}

KCenterMetric parse_kcenter_metric(std::string_view s) {
  if (s == "euclidean") return KCenterMetric::Euclidean;
  if (s == "cosine_distance" || s == "cosine") return KCenterMetric::CosineDistance;
  throw Error(ErrorCode::InvalidConfig, "unknown k-center metric '" + std::string(s) + "'");
}

std::string InitSpec::describe() const {
  std::ostringstream os;
  os << "init=" << to_string(strategy) << " size=" << coreset_size << " seed=" << seed
     << " allow_uneven=" << (allow_uneven ? 1 : 0);
  if (strategy == InitStrategy::KCenter) os << " metric=" << to_string(kcenter_metric);
  return os.str();
}

// ---------------------------------------------------------------------------
// Contribution scores

ContributionMatrix load_contribution_matrix(const std::filesystem::path& path) {
  std::string s = path.string();
  for (std::string_view suffix : {".scores.manifest.json", ".scores.f64"})
    if (io::ends_with(s, suffix)) s.resize(s.size() - suffix.size());
  json m;
  try {
    m = json::parse(io::read_file(s + ".scores.manifest.json"));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedFile, std::string("scores manifest: ") + e.what());
  }
  ContributionMatrix out;
  std::size_t count = 0;
  try {
    if (m.at("version").get<int>() != 1) throw Error(ErrorCode::UnsupportedVersion, "scores manifest version");
    count = m.at("count").get<std::size_t>();
    out.ids = m.at("ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("scores manifest: ") + e.what());
  }
  if (out.ids.size() != count) throw Error(ErrorCode::MalformedFile, "scores manifest ids length != count");
  const std::string blob = io::read_file(s + ".scores.f64");
  if (blob.size() != count * count * 8)
    throw Error(ErrorCode::BlobSizeMismatch, "scores blob holds " + std::to_string(blob.size()) +
                                                 " bytes, expected " + std::to_string(count * count * 8));
  out.values.resize(count * count);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = io::get_f64(blob.data() + 8 * i);
    if (!std::isfinite(out.values[i]))
      throw Error(ErrorCode::NonFiniteValue, "score row '" + out.ids[i / count] + "'");
  }
  return out;
}

void save_contribution_matrix(const ContributionMatrix& m, const std::filesystem::path& stem) {
  json manifest = {{"version", 1}, {"count", m.size()}, {"ids", m.ids}};
  std::string blob;
  for (double v : m.values) io::put_f64(blob, v);
  io::atomic_write(stem.string() + ".scores.f64", blob);
  io::atomic_write(stem.string() + ".scores.manifest.json", manifest.dump());
}

std::vector<std::pair<std::string, double>> load_infoscores_jsonl(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      out.emplace_back(obj.at("id").get<std::string>(), obj.at("infoscore").get<double>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<double> infoscores(const EmbeddingPack& pack, const ContributionMatrix& matrix) {
  if (matrix.size() != pack.size())
    throw Error(ErrorCode::IdMismatch, "matrix has " + std::to_string(matrix.size()) + " ids, pack has " +
                                           std::to_string(pack.size()));
  if (matrix.values.size() != matrix.size() * matrix.size())
    throw Error(ErrorCode::MalformedFile, "contribution matrix is not square");
  std::vector<double> scores(pack.size());
  std::vector<bool> seen(pack.size(), false);
  for (std::size_t p = 0; p < matrix.size(); ++p) {
    const auto pos = pack.find(matrix.ids[p]);
    if (!pos) throw Error(ErrorCode::IdMismatch, "matrix id '" + matrix.ids[p] + "' not in pack");
    if (seen[*pos]) throw Error(ErrorCode::IdMismatch, "matrix id '" + matrix.ids[p] + "' repeated");
    seen[*pos] = true;
    double sum = 0.0;
    for (std::size_t q = 0; q < matrix.size(); ++q) {
      const double v = matrix.at(p, q);
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "score row '" + matrix.ids[p] + "'");
      if (q != p) sum += v;
    }
    scores[*pos] = sum;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Quotas

std::vector<std::size_t> class_quotas(std::span<const std::string> labels, std::size_t coreset_size,
                                      bool allow_uneven) {
  const std::size_t j = labels.size();
  if (j == 0) throw Error(ErrorCode::EmptyInput, "label space is empty");
  if (coreset_size == 0) throw Error(ErrorCode::InvalidConfig, "coreset size must be positive");
  if (coreset_size % j != 0 && !allow_uneven)
    throw Error(ErrorCode::UnevenQuota, "coreset size " + std::to_string(coreset_size) +
                                            " is not divisible by " + std::to_string(j) + " classes");
  std::vector<std::size_t> quotas(j, coreset_size / j);
  std::vector<std::size_t> by_name(j);
  std::iota(by_name.begin(), by_name.end(), 0);
  std::sort(by_name.begin(), by_name.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });
  for (std::size_t r = 0; r < coreset_size % j; ++r) ++quotas[by_name[r]];
  return quotas;
}

namespace {

struct ClassPlan {
  std::vector<std::vector<std::size_t>> members;  // pack positions per class
  std::vector<std::size_t> take;                  // entries to select per class
  std::vector<std::size_t> quotas;
};

ClassPlan plan_classes(const EmbeddingPack& pack, const InitSpec& spec) {
  if (spec.coreset_size > pack.size())
    throw Error(ErrorCode::CoresetTooLarge, "coreset size " + std::to_string(spec.coreset_size) +
                                                " exceeds support size " + std::to_string(pack.size()));
  ClassPlan plan;
  plan.members = pack.indices_by_class();
  plan.quotas = class_quotas(pack.labels(), spec.coreset_size, spec.allow_uneven);
  plan.take.resize(plan.quotas.size());
  for (std::size_t c = 0; c < plan.quotas.size(); ++c) {
    if (plan.members[c].size() < plan.quotas[c] && !spec.allow_uneven)
      throw Error(ErrorCode::InsufficientClassSamples,
                  "class '" + pack.labels()[c] + "' has " + std::to_string(plan.members[c].size()) +
                      " samples, quota is " + std::to_string(plan.quotas[c]));
    plan.take[c] = std::min(plan.quotas[c], plan.members[c].size());
  }
  return plan;
}

/// Emits selected pack positions in class-index order.
Coreset assemble(const EmbeddingPack& pack, const InitSpec& spec, const ClassPlan& plan,
                 const std::vector<std::vector<std::size_t>>& selected) {
  Coreset c(pack.dim(), pack.labels(), spec.coreset_size / pack.labels().size(), spec.describe());
  for (std::size_t ci = 0; ci < selected.size(); ++ci) {
    for (auto p : selected[ci]) c.append({pack[p].id, pack[p].label, to_double(pack[p].view()), 0});
    c.record_shortfall(pack.labels()[ci], plan.quotas[ci] - plan.take[ci]);
  }
  return c;
}

}  // namespace

Coreset init_random(const EmbeddingPack& pack, const InitSpec& spec) {
  const auto plan = plan_classes(pack, spec);
  std::vector<std::vector<std::size_t>> selected(plan.members.size());
  for (std::size_t ci = 0; ci < plan.members.size(); ++ci) {
    Rng rng(derive_seed(spec.seed, {kRandomInitTag, ci}));
    auto pool = plan.members[ci];
    // Partial Fisher-Yates: the first `take` slots are the draw, in draw order.
    for (std::size_t t = 0; t < plan.take[ci]; ++t) {
      const auto j = t + static_cast<std::size_t>(rng.uniform_index(pool.size() - t));
      std::swap(pool[t], pool[j]);
    }
    pool.resize(plan.take[ci]);
    selected[ci] = std::move(pool);
  }
  return assemble(pack, spec, plan, selected);
}

double kcenter_distance(std::span<const double> a, std::span<const double> b, KCenterMetric metric) {
  if (metric == KCenterMetric::Euclidean) return euclidean_distance(a, b);
  return 1.0 - cosine_similarity(a, b);
}

std::vector<std::size_t> kcenter_greedy(std::span<const std::vector<double>> points, std::size_t quota,
                                        std::size_t first, KCenterMetric metric) {
  const std::size_t n = points.size();
  quota = std::min(quota, n);
  std::vector<std::size_t> chosen;
  if (quota == 0) return chosen;
  std::vector<bool> taken(n, false);
  std::vector<double> min_dist(n);
  chosen.push_back(first);
  taken[first] = true;
  for (std::size_t p = 0; p < n; ++p) min_dist[p] = kcenter_distance(points[p], points[first], metric);

  while (chosen.size() < quota) {
    double max_distance = 0.0;
    std::optional<std::size_t> next;
    for (std::size_t p = 0; p < n; ++p) {
      if (taken[p]) continue;
      if (min_dist[p] > max_distance) {
        max_distance = min_dist[p];
        next = p;
      }
    }
    if (!next) {
      // All remaining points coincide with a center.
      for (std::size_t p = 0; p < n && !next; ++p)
        if (!taken[p]) next = p;
    }
    chosen.push_back(*next);
    taken[*next] = true;
    for (std::size_t p = 0; p < n; ++p)
      min_dist[p] = std::min(min_dist[p], kcenter_distance(points[p], points[*next], metric));
  }
  return chosen;
}

Coreset init_kcenter(const EmbeddingPack& pack, const InitSpec& spec) {
  const auto plan = plan_classes(pack, spec);
  std::vector<std::vector<std::size_t>> selected(plan.members.size());
  parallel_for(plan.members.size(), [&](std::size_t ci) {
    const auto& members = plan.members[ci];
    if (plan.take[ci] == 0) return;
    std::vector<std::vector<double>> points;
    points.reserve(members.size());
    for (auto p : members) points.push_back(to_double(pack[p].view()));
    Rng rng(derive_seed(spec.seed, {kKCenterInitTag, ci}));
    const auto first = static_cast<std::size_t>(rng.uniform_index(members.size()));
    for (auto local : kcenter_greedy(points, plan.take[ci], first, spec.kcenter_metric))
      selected[ci].push_back(members[local]);
  });
  return assemble(pack, spec, plan, selected);
}

Coreset init_infoscore(const EmbeddingPack& pack, std::span<const double> scores, const InitSpec& spec) {
  if (scores.size() != pack.size())
    throw Error(ErrorCode::IdMismatch, "score count differs from pack size");
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!std::isfinite(scores[i])) throw Error(ErrorCode::NonFiniteValue, "infoscore of '" + pack[i].id + "'");
  const auto plan = plan_classes(pack, spec);
  std::vector<std::vector<std::size_t>> selected(plan.members.size());
  for (std::size_t ci = 0; ci < plan.members.size(); ++ci) {
    auto ranked = plan.members[ci];
    std::stable_sort(ranked.begin(), ranked.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    ranked.resize(plan.take[ci]);
    selected[ci] = std::move(ranked);
  }
  return assemble(pack, spec, plan, selected);
}

Coreset init_infoscore(const EmbeddingPack& pack, const ContributionMatrix& matrix, const InitSpec& spec) {
  return init_infoscore(pack, infoscores(pack, matrix), spec);
}

Coreset initialize(const EmbeddingPack& pack, const InitSpec& spec) {
  switch (spec.strategy) {
    case InitStrategy::Random: return init_random(pack, spec);
    case InitStrategy::KCenter: return init_kcenter(pack, spec);
    case InitStrategy::InfoScore: {
      if (!spec.scores_path) throw Error(ErrorCode::InvalidConfig, "infoscore initialization needs --scores");
      const auto path = *spec.scores_path;
      if (io::ends_with(path.string(), ".jsonl")) {
        const auto rows = load_infoscores_jsonl(path);
        if (rows.size() != pack.size()) throw Error(ErrorCode::IdMismatch, "infoscore rows differ from pack size");
        std::vector<double> scores(pack.size());
        std::vector<bool> seen(pack.size(), false);
        for (const auto& [id, score] : rows) {
          const auto pos = pack.find(id);
          if (!pos || seen[*pos]) throw Error(ErrorCode::IdMismatch, "infoscore id '" + id + "'");
          seen[*pos] = true;
          scores[*pos] = score;
        }
        return init_infoscore(pack, scores, spec);
      }
      return init_infoscore(pack, load_contribution_matrix(path), spec);
    }
  }
  throw Error(ErrorCode::Internal, "unhandled init strategy");
}

// ---------------------------------------------------------------------------

CoresetBuilder::CoresetBuilder(std::size_t dim, std::vector<std::string> labels, std::size_t coreset_size,
                               bool allow_uneven, std::string config_fingerprint)
    : quotas_(class_quotas(labels, coreset_size, allow_uneven)), allow_uneven_(allow_uneven) {
  const std::size_t base = coreset_size / labels.size();
  coreset_ = Coreset(dim, std::move(labels), base, std::move(config_fingerprint));
}

bool CoresetBuilder::class_full(std::size_t class_idx) const {
  return coreset_.members(class_idx).size() >= quotas_[class_idx];
}

Coreset CoresetBuilder::finish() && {
  for (std::size_t ci = 0; ci < quotas_.size(); ++ci) {
    const auto have = coreset_.members(ci).size();
    if (have < quotas_[ci]) {
      if (!allow_uneven_)
        throw Error(ErrorCode::InsufficientStream, "class '" + coreset_.labels()[ci] + "' filled " +
                                                       std::to_string(have) + " of " +
                                                       std::to_string(quotas_[ci]));
      coreset_.record_shortfall(coreset_.labels()[ci], quotas_[ci] - have);
    }
  }
  return std::move(coreset_);
}

FillResult filling_init_step(CoresetBuilder& builder, const EmbeddingRecord& sample) {
  const auto ci = builder.coreset_.class_index(sample.label);
  if (!ci) throw Error(ErrorCode::UnknownLabel, "sample '" + sample.id + "' label '" + sample.label + "'");
  if (builder.class_full(*ci)) return FillResult::Full;
  builder.coreset_.insert_class_ordered({sample.id, sample.label, to_double(sample.view()), 0});
  return FillResult::Added;
}

}  // namespace keco
