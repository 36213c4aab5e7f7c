#include "keco/coreset.hpp"

#include <bit>
#include <cmath>

#include <json.hpp>

#include "keco/error.hpp"
#include "keco/io_util.hpp"
#include "keco/similarity.hpp"
#include "keco/vec_math.hpp"

namespace keco {

using nlohmann::json;

Coreset::Coreset(std::size_t dim, std::vector<std::string> labels, std::size_t per_class_quota,
                 std::string config_fingerprint)
    : dim_(dim),
      labels_(std::move(labels)),
      per_class_quota_(per_class_quota),
      config_fingerprint_(std::move(config_fingerprint)),
      members_(labels_.size()) {}

void Coreset::record_shortfall(const std::string& label, std::size_t missing) {
  if (missing > 0) shortfall_[label] = missing;
}

std::optional<std::size_t> Coreset::class_index(const std::string& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return i;
  return std::nullopt;
}

std::vector<ClassMember> Coreset::entries_of_class(const std::string& label) const {
  const auto ci = class_index(label);
  if (!ci) throw Error(ErrorCode::UnknownLabel, "'" + label + "' not in coreset label space");
  std::vector<ClassMember> out;
  out.reserve(members_[*ci].size());
  for (auto idx : members_[*ci]) out.push_back({idx, entries_[idx]});
  return out;
}

namespace {

void check_entry(const Coreset& c, const CoresetEntry& e) {
  if (e.key.size() != c.dim())
    throw Error(ErrorCode::DimensionMismatch, "entry '" + e.source_id + "' key dimension " +
                                                  std::to_string(e.key.size()));
  for (double v : e.key)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "entry '" + e.source_id + "'");
}

}  // namespace

void Coreset::append(CoresetEntry entry) {
  check_entry(*this, entry);
  const auto ci = class_index(entry.label);
  if (!ci) throw Error(ErrorCode::UnknownLabel, "entry '" + entry.source_id + "' label '" + entry.label + "'");
  members_[*ci].push_back(entries_.size());
  entry_class_.push_back(*ci);
  entries_.push_back(std::move(entry));
}

std::size_t Coreset::insert_class_ordered(CoresetEntry entry) {
  check_entry(*this, entry);
  const auto ci = class_index(entry.label);
  if (!ci) throw Error(ErrorCode::UnknownLabel, "entry '" + entry.source_id + "' label '" + entry.label + "'");
  std::size_t pos = 0;
  while (pos < entries_.size() && entry_class_[pos] <= *ci) ++pos;
  entries_.insert(entries_.begin() + static_cast<std::ptrdiff_t>(pos), std::move(entry));
  rebuild_index();
  return pos;
}

void Coreset::set_key(std::size_t i, std::vector<double> key) {
  CoresetEntry probe{entries_[i].source_id, entries_[i].label, std::move(key), 0};
  check_entry(*this, probe);
  entries_[i].key = std::move(probe.key);
}

void Coreset::rebuild_index() {
  members_.assign(labels_.size(), {});
  entry_class_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto ci = *class_index(entries_[i].label);
    entry_class_.push_back(ci);
    members_[ci].push_back(i);
  }
}

bool Coreset::operator==(const Coreset& other) const {
  if (dim_ != other.dim_ || labels_ != other.labels_ || per_class_quota_ != other.per_class_quota_ ||
      config_fingerprint_ != other.config_fingerprint_ || shortfall_ != other.shortfall_ ||
      entries_.size() != other.entries_.size())
    return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.source_id != b.source_id || a.label != b.label || a.updates_applied != b.updates_applied ||
        a.key.size() != b.key.size())
      return false;
    for (std::size_t k = 0; k < a.key.size(); ++k)
      if (std::bit_cast<std::uint64_t>(a.key[k]) != std::bit_cast<std::uint64_t>(b.key[k])) return false;
  }
  return true;
}

Coreset coreset_from_pack(const EmbeddingPack& pack, std::string config_fingerprint) {
  Coreset c(pack.dim(), pack.labels(), 0, std::move(config_fingerprint));
  std::vector<std::size_t> order;
  for (const auto& members : pack.indices_by_class()) order.insert(order.end(), members.begin(), members.end());
  for (auto i : order) c.append({pack[i].id, pack[i].label, to_double(pack[i].view()), 0});
  return c;
}

// ---------------------------------------------------------------------------
// Snapshots

std::string encode_snapshot(const Coreset& c) {
  std::vector<std::string> ids;
  std::vector<std::size_t> label_index;
  std::vector<std::uint64_t> updates;
  for (std::size_t i = 0; i < c.size(); ++i) {
    ids.push_back(c[i].source_id);
    label_index.push_back(c.label_index(i));
    updates.push_back(c[i].updates_applied);
  }
  json header = {{"checksum_algo", io::kChecksumAlgo},
                 {"config_fingerprint", c.config_fingerprint()},
                 {"count", c.size()},
                 {"dim", c.dim()},
                 {"ids", std::move(ids)},
                 {"label_index", std::move(label_index)},
                 {"labels", c.labels()},
                 {"per_class_quota", c.per_class_quota()},
                 {"shortfall", c.shortfall()},
                 {"updates_applied", std::move(updates)}};
  const std::string header_text = header.dump();

  std::string out = "KECO";
  io::put_u32(out, kSnapshotVersion);
  io::put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out.reserve(out.size() + c.size() * c.dim() * 8 + 8);
  for (const auto& e : c.entries())
    for (double v : e.key) io::put_f64(out, v);
  io::put_u64(out, io::fnv1a64(out));
  return out;
}

Coreset decode_snapshot(const std::string& bytes) {
  constexpr std::size_t kPrefix = 12;
  if (bytes.size() < kPrefix) throw Error(ErrorCode::TruncatedSnapshot, "file shorter than prefix");
  if (bytes.compare(0, 4, "KECO") != 0) throw Error(ErrorCode::MalformedFile, "bad magic");
  const auto version = io::get_u32(bytes.data() + 4);
  if (version != kSnapshotVersion)
    throw Error(ErrorCode::UnsupportedVersion, "snapshot version " + std::to_string(version) +
                                                   ", reader supports " + std::to_string(kSnapshotVersion));
  const std::size_t header_len = io::get_u32(bytes.data() + 8);
  if (bytes.size() < kPrefix + header_len + 8) throw Error(ErrorCode::TruncatedSnapshot, "header cut short");

  auto checksum_ok = [&] {
    const std::string_view body(bytes.data(), bytes.size() - 8);
    return io::fnv1a64(body) == io::get_u64(bytes.data() + bytes.size() - 8);
  };

  json h;
  std::size_t dim = 0, count = 0, quota = 0;
  std::vector<std::string> labels, ids;
  std::vector<std::size_t> label_index;
  std::vector<std::uint64_t> updates;
  std::map<std::string, std::size_t> shortfall;
  std::string fingerprint;
  try {
    h = json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
    if (h.at("checksum_algo").get<std::string>() != io::kChecksumAlgo)
      throw Error(ErrorCode::MalformedFile, "unknown checksum_algo " + h.at("checksum_algo").dump());
    dim = h.at("dim").get<std::size_t>();
    count = h.at("count").get<std::size_t>();
    quota = h.at("per_class_quota").get<std::size_t>();
    labels = h.at("labels").get<std::vector<std::string>>();
    ids = h.at("ids").get<std::vector<std::string>>();
    label_index = h.at("label_index").get<std::vector<std::size_t>>();
    updates = h.at("updates_applied").get<std::vector<std::uint64_t>>();
    fingerprint = h.at("config_fingerprint").get<std::string>();
    if (h.contains("shortfall")) shortfall = h["shortfall"].get<std::map<std::string, std::size_t>>();
  } catch (const json::exception& e) {
    if (!checksum_ok()) throw Error(ErrorCode::ChecksumFailure, "snapshot header corrupted");
    throw Error(ErrorCode::MalformedFile, std::string("snapshot header: ") + e.what());
  }

  const std::size_t expected = kPrefix + header_len + count * dim * 8 + 8;
  if (bytes.size() < expected) throw Error(ErrorCode::TruncatedSnapshot, "key blob cut short");
  if (bytes.size() > expected) throw Error(ErrorCode::MalformedFile, "trailing bytes after checksum");
  if (!checksum_ok()) throw Error(ErrorCode::ChecksumFailure, "snapshot checksum mismatch");
  if (ids.size() != count || label_index.size() != count || updates.size() != count)
    throw Error(ErrorCode::MalformedFile, "header arrays disagree with count");

  Coreset c(dim, labels, quota, fingerprint);
  for (const auto& [label, missing] : shortfall) c.record_shortfall(label, missing);
  const char* blob = bytes.data() + kPrefix + header_len;
  for (std::size_t i = 0; i < count; ++i) {
    if (label_index[i] >= labels.size())
      throw Error(ErrorCode::MalformedFile, "label index out of range for '" + ids[i] + "'");
    CoresetEntry e{ids[i], labels[label_index[i]], std::vector<double>(dim), updates[i]};
    for (std::size_t k = 0; k < dim; ++k) e.key[k] = io::get_f64(blob + (i * dim + k) * 8);
    c.append(std::move(e));
  }
  return c;
}

void save_snapshot(const Coreset& coreset, const std::filesystem::path& path) {
  io::atomic_write(path, encode_snapshot(coreset));
}

Coreset load_snapshot(const std::filesystem::path& path) { return decode_snapshot(io::read_file(path)); }

// ---------------------------------------------------------------------------

DispersionStats dispersion_stats(const Coreset& c) {
  if (c.empty()) throw Error(ErrorCode::EmptyInput, "dispersion of an empty coreset");
  DispersionStats stats;
  for (std::size_t ci = 0; ci < c.labels().size(); ++ci) {
    const auto& members = c.members(ci);
    if (members.empty()) continue;
    ClassDispersion d;
    d.label = c.labels()[ci];
    d.count = members.size();
    if (members.size() > 1) {
      double sum = 0.0;
      std::size_t pairs = 0;
      for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b, ++pairs)
          sum += 1.0 - cosine_similarity(c[members[a]].key_view(), c[members[b]].key_view());
      d.mean_pairwise_cosine_distance = sum / static_cast<double>(pairs);

      std::vector<double> centroid(c.dim(), 0.0);
      for (auto m : members)
        for (std::size_t k = 0; k < c.dim(); ++k) centroid[k] += c[m].key[k];
      for (auto& v : centroid) v /= static_cast<double>(members.size());
      double dist = 0.0;
      for (auto m : members) dist += euclidean_distance(c[m].key_view(), std::span<const double>(centroid));
      d.mean_distance_to_centroid = dist / static_cast<double>(members.size());
    }
    stats.per_class.push_back(std::move(d));
  }
  for (const auto& d : stats.per_class) {
    stats.mean_cosine_dispersion += d.mean_pairwise_cosine_distance;
    stats.mean_centroid_distance += d.mean_distance_to_centroid;
  }
  stats.mean_cosine_dispersion /= static_cast<double>(stats.per_class.size());
  stats.mean_centroid_distance /= static_cast<double>(stats.per_class.size());
  return stats;
}

}  // namespace keco
