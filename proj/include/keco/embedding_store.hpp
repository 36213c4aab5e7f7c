#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace keco {

/// One precomputed embedding: the encoder output for a labelled sample.
struct EmbeddingRecord {
  std::string id;
  std::string label;
  std::vector<float> vector;

  std::span<const float> view() const { return vector; }
  bool operator==(const EmbeddingRecord&) const = default;
};

/// Immutable, validated collection of embedding records sharing one
/// dimension and label space. Iteration order is the on-disk order.
class EmbeddingPack {
 public:
  EmbeddingPack() = default;

  /// Validates every record (dimension, finiteness, nonzero norm, unique id,
  /// known label) and throws keco::Error naming the first offending id.
  static EmbeddingPack create(std::size_t dim, std::vector<std::string> labels,
                              std::vector<EmbeddingRecord> records);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Dense label index (position in labels()) of record i.
  std::size_t label_index(std::size_t i) const { return label_index_[i]; }
  std::optional<std::size_t> class_index(const std::string& label) const;
  std::optional<std::size_t> find(const std::string& id) const;

  /// Record positions per class, in pack order. Indexed by label index.
  std::vector<std::vector<std::size_t>> indices_by_class() const;

  /// Digest of the binary encoding; identifies pack content in reports.
  std::uint64_t fingerprint() const;

  bool operator==(const EmbeddingPack& other) const {
    return dim_ == other.dim_ && labels_ == other.labels_ && records_ == other.records_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> labels_;
  std::vector<EmbeddingRecord> records_;
  std::vector<std::size_t> label_index_;
  std::unordered_map<std::string, std::size_t> label_lookup_;
  std::unordered_map<std::string, std::size_t> id_lookup_;
};

enum class PackFormat { Jsonl, Binary };

/// Loads `<stem>.manifest.json` + `<stem>.vec` (binary) or a JSONL file.
/// Binary is chosen when the path ends in .manifest.json or .vec, or when
/// `<path>.manifest.json` exists.
EmbeddingPack load_pack(const std::filesystem::path& path);

/// For binary output `path` may be the stem or the manifest path.
void save_pack(const EmbeddingPack& pack, const std::filesystem::path& path, PackFormat format);

/// Parses JSONL text (used by load_pack and for streaming input).
EmbeddingPack parse_jsonl_pack(const std::string& text);
std::string encode_jsonl_pack(const EmbeddingPack& pack);

/// Manifest JSON and vector blob for the binary format.
std::pair<std::string, std::string> encode_binary_pack(const EmbeddingPack& pack);
EmbeddingPack decode_binary_pack(const std::string& manifest_json, const std::string& blob);

/// Returns (records with the given ids, remainder), both in pack order.
std::pair<EmbeddingPack, EmbeddingPack> split_pack(const EmbeddingPack& pack,
                                                   const std::unordered_set<std::string>& ids);

/// Restricts a pack to the given record positions (kept in the given order).
EmbeddingPack select_records(const EmbeddingPack& pack, std::span<const std::size_t> positions);

/// Stem of a binary pack path: strips ".manifest.json" or ".vec".
std::filesystem::path binary_stem(const std::filesystem::path& path);

}  // namespace keco
