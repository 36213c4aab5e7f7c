#include "keco/eval_harness.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "keco/error.hpp"
#include "keco/io_util.hpp"
#include "keco/parallel.hpp"
#include "keco/rng.hpp"
#include "keco/vec_math.hpp"

namespace keco {

using nlohmann::json;

std::string knn_predict(const Coreset& source, const EmbeddingRecord& query, std::size_t k,
                        SimilarityMetric metric) {
  const auto result = retrieve_topk(source, query, k, metric);
  // Labels in order of first appearance, so index 0 is the rank-1 label.
  std::vector<std::pair<std::string, std::size_t>> votes;
  for (const auto& r : result.ranked) {
    auto it = std::find_if(votes.begin(), votes.end(), [&](const auto& v) { return v.first == r.label; });
    if (it == votes.end()) {
      votes.emplace_back(r.label, 1);
    } else {
      ++it->second;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < votes.size(); ++i)
    if (votes[i].second > votes[best].second) best = i;
  return votes[best].first;
}

double top1_accuracy(const Coreset& source, const EmbeddingPack& test, std::size_t k, SimilarityMetric metric) {
  if (test.empty()) throw Error(ErrorCode::EmptyInput, "test pack is empty");
  std::vector<char> hit(test.size(), 0);
  parallel_for(test.size(), [&](std::size_t i) { hit[i] = knn_predict(source, test[i], k, metric) == test[i].label; });
  std::size_t correct = 0;
  for (char h : hit) correct += h ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::FsIc: return "fs-ic";
    case Condition::FsIs: return "fs-is";
    case Condition::KecoRs: return "keco-rs";
    case Condition::KecoSs: return "keco-ss";
    case Condition::KecoDs: return "keco-ds";
  }
  return "?";
}

Condition parse_condition(std::string_view s) {
  for (auto c : {Condition::FsIc, Condition::FsIs, Condition::KecoRs, Condition::KecoSs, Condition::KecoDs})
    if (to_string(c) == s) return c;
  throw Error(ErrorCode::InvalidConfig,
              "unknown condition '" + std::string(s) + "' (fs-ic|fs-is|keco-rs|keco-ss|keco-ds)");
}

const ConditionResult& ExperimentResults::row(Condition c) const {
  for (const auto& r : rows)
    if (r.condition == c) return r;
  throw Error(ErrorCode::InvalidConfig, "condition '" + std::string(to_string(c)) + "' was not evaluated");
}

json ExperimentResults::to_json() const {
  json conditions = json::array();
  for (const auto& r : rows) {
    json acc = json::object();
    for (std::size_t s = 0; s < shots.size(); ++s) acc[std::to_string(shots[s]) + "-shot"] = r.accuracy[s];
    conditions.push_back({{"condition", to_string(r.condition)},
                          {"top1_accuracy", std::move(acc)},
                          {"retrieval_pool_size", r.source_size},
                          {"dispersion", {{"before", r.dispersion_before}, {"after", r.dispersion_after}}}});
  }
  return {{"name", name},
          {"config", config},
          {"shots", shots},
          {"coreset_size", coreset_size},
          {"untapped_size", untapped_size},
          {"metric", "top1"},
          {"conditions", std::move(conditions)}};
}

std::string ExperimentResults::to_text() const {
  std::ostringstream os;
  char buf[64];
  os << name << "  (coreset " << coreset_size << ", untapped " << untapped_size << ")\n";
  std::snprintf(buf, sizeof buf, "%-10s", "condition");
  os << buf;
  for (auto s : shots) {
    std::snprintf(buf, sizeof buf, " %9s", (std::to_string(s) + "-shot").c_str());
    os << buf;
  }
  os << "  disp_before  disp_after\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s", std::string(to_string(r.condition)).c_str());
    os << buf;
    for (double a : r.accuracy) {
      std::snprintf(buf, sizeof buf, " %9.2f", 100.0 * a);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "  %11.6f  %10.6f\n", r.dispersion_before, r.dispersion_after);
    os << buf;
  }
  return os.str();
}

namespace {

SelectStrategy strategy_of(Condition c) {
  switch (c) {
    case Condition::KecoRs: return SelectStrategy::Rs;
    case Condition::KecoSs: return SelectStrategy::Ss;
    default: return SelectStrategy::Ds;
  }
}

}  // namespace

ExperimentResults evaluate(const ExperimentSpec& spec) {
  if (spec.shots.empty()) throw Error(ErrorCode::InvalidConfig, "at least one shot count is required");
  for (auto s : spec.shots)
    if (s < 1) throw Error(ErrorCode::InvalidConfig, "shot counts must be >= 1");
  if (spec.support.labels() != spec.test.labels()) {
    for (const auto& l : spec.test.labels())
      if (!spec.support.class_index(l))
        throw Error(ErrorCode::UnknownLabel, "test label '" + l + "' absent from support label space");
  }
  spec.update.validate();

  const Coreset initial = initialize(spec.support, spec.init);
  std::unordered_set<std::string> in_coreset;
  for (const auto& e : initial.entries()) in_coreset.insert(e.source_id);

  // Untapped = support minus coreset, optionally trimmed per class.
  std::vector<std::size_t> kept_untapped;
  std::vector<std::size_t> taken(spec.support.labels().size(), 0);
  for (std::size_t i = 0; i < spec.support.size(); ++i) {
    if (in_coreset.contains(spec.support[i].id)) continue;
    const auto ci = spec.support.label_index(i);
    if (spec.untapped_ratio) {
      const auto limit = static_cast<std::size_t>(
          std::llround(*spec.untapped_ratio * static_cast<double>(initial.members(ci).size())));
      if (taken[ci] >= limit) continue;
    }
    ++taken[ci];
    kept_untapped.push_back(i);
  }
  const EmbeddingPack untapped = select_records(spec.support, kept_untapped);
  std::vector<std::size_t> used_support;
  for (std::size_t i = 0; i < spec.support.size(); ++i)
    if (in_coreset.contains(spec.support[i].id) ||
        std::binary_search(kept_untapped.begin(), kept_untapped.end(), i))
      used_support.push_back(i);
  const EmbeddingPack support_used = select_records(spec.support, used_support);

  ExperimentResults results;
  results.name = spec.name;
  results.shots = spec.shots;
  results.coreset_size = initial.size();
  results.untapped_size = untapped.size();
  results.config = {{"init", spec.init.describe()},
                    {"update", spec.update.to_json()},
                    {"support_size", spec.support.size()},
                    {"test_size", spec.test.size()},
                    {"support", io::hex64(spec.support.fingerprint())},
                    {"test", io::hex64(spec.test.fingerprint())}};
  if (spec.untapped_ratio) results.config["untapped_ratio"] = *spec.untapped_ratio;

  const double initial_dispersion = dispersion_stats(initial).mean_cosine_dispersion;
  for (auto condition : spec.conditions) {
    ConditionResult row{condition, {}, initial_dispersion, initial_dispersion, 0, std::nullopt, std::nullopt};
    Coreset source;
    switch (condition) {
      case Condition::FsIc:
        source = initial;
        break;
      case Condition::FsIs:
        source = coreset_from_pack(support_used, "full support");
        row.dispersion_before = row.dispersion_after = dispersion_stats(source).mean_cosine_dispersion;
        break;
      default: {
        UpdateConfig cfg = spec.update;
        cfg.strategy = strategy_of(condition);
        auto updated = run_update(initial, untapped, cfg);
        row.dispersion_after = dispersion_stats(updated.coreset).mean_cosine_dispersion;
        source = std::move(updated.coreset);
        row.report = std::move(updated.report);
        break;
      }
    }
    for (auto k : spec.shots) row.accuracy.push_back(top1_accuracy(source, spec.test, k, spec.metric));
    row.source_size = source.size();
    row.coreset = std::move(source);
    results.rows.push_back(std::move(row));
  }
  return results;
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (classes == 0 || support_per_class == 0 || test_per_class == 0 || dim == 0)
    throw Error(ErrorCode::InvalidConfig, "synthetic counts and dim must be positive");
  if (!(center_scale > 0.0) || !(noise_scale >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "center scale must be > 0 and noise scale >= 0");
}

std::pair<EmbeddingPack, EmbeddingPack> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  constexpr std::uint64_t kCenters = 1, kSupport = 2, kTest = 3;
  std::vector<std::string> labels;
  char buf[32];
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::snprintf(buf, sizeof buf, "class_%03zu", c);
    labels.emplace_back(buf);
  }

  std::vector<std::vector<double>> centers(spec.classes, std::vector<double>(spec.dim));
  Rng center_rng(derive_seed(spec.seed, {kCenters}));
  for (auto& center : centers) {
    double n = 0.0;
    do {
      for (auto& v : center) v = center_rng.normal();
      n = norm(std::span<const double>(center));
    } while (n == 0.0);
    for (auto& v : center) v *= spec.center_scale / n;
  }

  auto draw = [&](std::uint64_t tag, std::size_t per_class, const char* prefix) {
    std::vector<EmbeddingRecord> records;
    for (std::size_t c = 0; c < spec.classes; ++c) {
      Rng rng(derive_seed(spec.seed, {tag, c}));
      for (std::size_t i = 0; i < per_class; ++i) {
        EmbeddingRecord r;
        std::snprintf(buf, sizeof buf, "%s%03zu_%04zu", prefix, c, i);
        r.id = buf;
        r.label = labels[c];
        r.vector.resize(spec.dim);
        do {
          for (std::size_t k = 0; k < spec.dim; ++k)
            r.vector[k] = static_cast<float>(centers[c][k] + spec.noise_scale * rng.normal());
        } while (norm(r.view()) == 0.0);
        records.push_back(std::move(r));
      }
    }
    return EmbeddingPack::create(spec.dim, labels, std::move(records));
  };
  return {draw(kSupport, spec.support_per_class, "s"), draw(kTest, spec.test_per_class, "t")};
}

// ---------------------------------------------------------------------------

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::Epochs: return "epochs";
    case SweepAxis::Batch: return "batch";
    case SweepAxis::Ratio: return "ratio";
    case SweepAxis::CoresetSize: return "coreset_size";
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view s) {
  for (auto a : {SweepAxis::Alpha, SweepAxis::Epochs, SweepAxis::Batch, SweepAxis::Ratio, SweepAxis::CoresetSize})
    if (to_string(a) == s) return a;
  throw Error(ErrorCode::InvalidConfig,
              "unknown sweep axis '" + std::string(s) + "' (alpha|epochs|batch|ratio|coreset_size)");
}

void apply_axis(ExperimentSpec& spec, SweepAxis axis, double value) {
  auto as_count = [&](const char* what) {
    if (!(value >= 1.0) || value != std::floor(value))
      throw Error(ErrorCode::InvalidConfig, std::string(what) + " must be a positive integer");
    return static_cast<std::size_t>(value);
  };
  switch (axis) {
    case SweepAxis::Alpha: spec.update.alpha = value; break;
    case SweepAxis::Epochs: spec.update.epochs = as_count("epochs"); break;
    case SweepAxis::Batch: spec.update.batch_size = as_count("batch size"); break;
    case SweepAxis::Ratio:
      if (!(value > 0.0)) throw Error(ErrorCode::InvalidConfig, "ratio must be positive");
      spec.untapped_ratio = value;
      break;
    case SweepAxis::CoresetSize: spec.init.coreset_size = as_count("coreset size"); break;
  }
}

SweepTable sweep(const ExperimentSpec& spec, SweepAxis axis, const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::InvalidConfig, "sweep needs at least one value");
  SweepTable table{{axis}, {}};
  for (double v : values) {
    ExperimentSpec s = spec;
    apply_axis(s, axis, v);
    table.rows.push_back({{{axis, v}}, evaluate(s)});
  }
  return table;
}

SweepTable sweep(const ExperimentSpec& spec, SweepAxis axis_a, const std::vector<double>& values_a,
                 SweepAxis axis_b, const std::vector<double>& values_b) {
  if (values_a.empty() || values_b.empty()) throw Error(ErrorCode::InvalidConfig, "sweep needs at least one value");
  SweepTable table{{axis_a, axis_b}, {}};
  for (double a : values_a) {
    for (double b : values_b) {
      ExperimentSpec s = spec;
      apply_axis(s, axis_a, a);
      apply_axis(s, axis_b, b);
      table.rows.push_back({{{axis_a, a}, {axis_b, b}}, evaluate(s)});
    }
  }
  return table;
}

json SweepTable::to_json() const {
  json axes_json = json::array();
  for (auto a : axes) axes_json.push_back(to_string(a));
  json rows_json = json::array();
  for (const auto& r : rows) {
    json point = json::object();
    for (const auto& [axis, v] : r.point) point[std::string(to_string(axis))] = v;
    rows_json.push_back({{"point", std::move(point)}, {"results", r.results.to_json()}});
  }
  return {{"axes", std::move(axes_json)}, {"rows", std::move(rows_json)}};
}

std::string SweepTable::to_text() const {
  std::ostringstream os;
  char buf[64];
  if (rows.empty()) return "";
  const auto& first = rows.front().results;
  for (auto a : axes) {
    std::snprintf(buf, sizeof buf, "%-13s", std::string(to_string(a)).c_str());
    os << buf;
  }
  for (const auto& r : first.rows)
    for (auto s : first.shots) {
      std::snprintf(buf, sizeof buf, " %14s",
                    (std::string(to_string(r.condition)) + "@" + std::to_string(s)).c_str());
      os << buf;
    }
  os << '\n';
  for (const auto& row : rows) {
    for (const auto& [axis, v] : row.point) {
      std::snprintf(buf, sizeof buf, "%-13g", v);
      os << buf;
    }
    for (const auto& r : row.results.rows)
      for (double a : r.accuracy) {
        std::snprintf(buf, sizeof buf, " %14.2f", 100.0 * a);
        os << buf;
      }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

std::string dispersion_csv(const DispersionStats& stats) {
  std::ostringstream os;
  os.precision(17);
  os << "label,count,mean_pairwise_cosine_distance,mean_distance_to_centroid\n";
  for (const auto& d : stats.per_class)
    os << d.label << ',' << d.count << ',' << d.mean_pairwise_cosine_distance << ','
       << d.mean_distance_to_centroid << '\n';
  return os.str();
}

std::string pca_csv(const Coreset& coreset) {
  const auto n = static_cast<Eigen::Index>(coreset.size());
  const auto d = static_cast<Eigen::Index>(coreset.dim());
  Eigen::MatrixXd keys(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k) keys(i, k) = coreset[static_cast<std::size_t>(i)].key[static_cast<std::size_t>(k)];
  Eigen::MatrixXd centered = keys.rowwise() - keys.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index comps = std::min<Eigen::Index>(2, d);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 2);
  for (Eigen::Index c = 0; c < comps; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);  // eigenvalues ascend
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(c) = v;
  }
  Eigen::MatrixXd proj = centered * basis;
  std::ostringstream os;
  os.precision(17);
  os << "index,source_id,label,pc1,pc2\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = coreset[static_cast<std::size_t>(i)];
    os << i << ',' << e.source_id << ',' << e.label << ',' << proj(i, 0) << ',' << proj(i, 1) << '\n';
  }
  return os.str();
}

}  // namespace keco
