#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "keco/embedding_store.hpp"

namespace keco {

/// One coreset element: the originating support record, its class, and the
/// mutable key used for retrieval and updates.
struct CoresetEntry {
  std::string source_id;
  std::string label;
  std::vector<double> key;
  std::uint64_t updates_applied = 0;

  std::span<const double> key_view() const { return key; }
};

struct ClassMember {
  std::size_t index;
  const CoresetEntry& entry;
};

/// Fixed-size, class-balanced set of keyed entries. Entry order is decided at
/// construction; updates only touch keys and counters.
class Coreset {
 public:
  Coreset() = default;
  Coreset(std::size_t dim, std::vector<std::string> labels, std::size_t per_class_quota,
          std::string config_fingerprint);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t per_class_quota() const { return per_class_quota_; }
  const std::string& config_fingerprint() const { return config_fingerprint_; }

  /// Classes that ended up below quota at initialization, with the missing count.
  const std::map<std::string, std::size_t>& shortfall() const { return shortfall_; }
  void record_shortfall(const std::string& label, std::size_t missing);

  const std::vector<CoresetEntry>& entries() const { return entries_; }
  const CoresetEntry& operator[](std::size_t i) const { return entries_[i]; }

  std::optional<std::size_t> class_index(const std::string& label) const;
  std::size_t label_index(std::size_t entry) const { return entry_class_[entry]; }

  /// Coreset indices of class `class_idx`, ascending.
  const std::vector<std::size_t>& members(std::size_t class_idx) const { return members_[class_idx]; }

  /// Entries with `label` in coreset order. Throws UnknownLabel.
  std::vector<ClassMember> entries_of_class(const std::string& label) const;

  /// Appends at the end. Used by one-shot initializers that emit in final order.
  void append(CoresetEntry entry);

  /// Inserts after the last entry of the same class and before any entry of a
  /// later class, keeping class-major order during incremental filling.
  std::size_t insert_class_ordered(CoresetEntry entry);

  /// Writers. Keys must stay finite and keep dimension dim().
  void set_key(std::size_t i, std::vector<double> key);
  void bump_updates(std::size_t i) { ++entries_[i].updates_applied; }

  /// Strict equality: order, ids, labels, bitwise keys, counters, metadata.
  bool operator==(const Coreset& other) const;

 private:
  void rebuild_index();

  std::size_t dim_ = 0;
  std::vector<std::string> labels_;
  std::size_t per_class_quota_ = 0;
  std::string config_fingerprint_;
  std::map<std::string, std::size_t> shortfall_;
  std::vector<CoresetEntry> entries_;
  std::vector<std::size_t> entry_class_;
  std::vector<std::vector<std::size_t>> members_;
};

/// Every pack record as an entry with key = embedding (retrieval over a full
/// support set, or a coreset identical to its source pack).
Coreset coreset_from_pack(const EmbeddingPack& pack, std::string config_fingerprint);

// ---------------------------------------------------------------------------
// Snapshots
//
// Layout: "KECO" | u32 version (1) | u32 header length | UTF-8 JSON header
// (sorted keys) | count*dim f64 LE keys, entry-major | u64 LE FNV-1a-64 of
// every preceding byte.

inline constexpr std::uint32_t kSnapshotVersion = 1;

std::string encode_snapshot(const Coreset& coreset);
Coreset decode_snapshot(const std::string& bytes);
void save_snapshot(const Coreset& coreset, const std::filesystem::path& path);
Coreset load_snapshot(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dispersion (numeric stand-in for inspecting key clustering)

struct ClassDispersion {
  std::string label;
  std::size_t count = 0;
  /// Mean over unordered pairs of 1 - cos(k_a, k_b). 0 for single-entry classes.
  double mean_pairwise_cosine_distance = 0.0;
  /// Mean Euclidean distance of keys to the class key centroid.
  double mean_distance_to_centroid = 0.0;
};

struct DispersionStats {
  std::vector<ClassDispersion> per_class;  // classes with at least one entry, label order
  double mean_cosine_dispersion = 0.0;     // unweighted mean over classes
  double mean_centroid_distance = 0.0;
};

DispersionStats dispersion_stats(const Coreset& coreset);

}  // namespace keco
