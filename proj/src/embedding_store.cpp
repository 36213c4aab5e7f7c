#include "keco/embedding_store.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "keco/error.hpp"
#include "keco/io_util.hpp"
#include "keco/vec_math.hpp"

namespace keco {

using nlohmann::json;

EmbeddingPack EmbeddingPack::create(std::size_t dim, std::vector<std::string> labels,
                                    std::vector<EmbeddingRecord> records) {
  if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "pack dimension must be positive");
  EmbeddingPack pack;
  pack.dim_ = dim;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!pack.label_lookup_.emplace(labels[i], i).second)
      throw Error(ErrorCode::MalformedFile, "duplicate label '" + labels[i] + "' in label space");
  }
  pack.labels_ = std::move(labels);
  pack.label_index_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.vector.size() != dim)
      throw Error(ErrorCode::DimensionMismatch, "record '" + r.id + "' has dimension " +
                                                    std::to_string(r.vector.size()) + ", expected " +
                                                    std::to_string(dim));
    for (float v : r.vector)
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "record '" + r.id + "'");
    if (norm(r.view()) == 0.0) throw Error(ErrorCode::ZeroNormVector, "record '" + r.id + "'");
    if (!pack.id_lookup_.emplace(r.id, i).second)
      throw Error(ErrorCode::DuplicateId, "record '" + r.id + "'");
    auto it = pack.label_lookup_.find(r.label);
    if (it == pack.label_lookup_.end())
      throw Error(ErrorCode::UnknownLabel, "record '" + r.id + "' has label '" + r.label + "'");
    pack.label_index_.push_back(it->second);
  }
  pack.records_ = std::move(records);
  return pack;
}

std::optional<std::size_t> EmbeddingPack::class_index(const std::string& label) const {
  auto it = label_lookup_.find(label);
  if (it == label_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> EmbeddingPack::find(const std::string& id) const {
  auto it = id_lookup_.find(id);
  if (it == id_lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::vector<std::size_t>> EmbeddingPack::indices_by_class() const {
  std::vector<std::vector<std::size_t>> out(labels_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) out[label_index_[i]].push_back(i);
  return out;
}

std::uint64_t EmbeddingPack::fingerprint() const {
  const auto [manifest, blob] = encode_binary_pack(*this);
  return io::fnv1a64(blob, io::fnv1a64(manifest));
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

std::string format_float(float f) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, f);
  std::string s(buf, res.ptr);
  // Loaders parse through double; keep the shortest float form only when it
  // survives that path, else emit the exact double expansion.
  if (static_cast<float>(std::strtod(s.c_str(), nullptr)) != f) {
    res = std::to_chars(buf, buf + sizeof buf, static_cast<double>(f));
    s.assign(buf, res.ptr);
  }
  return s;
}

EmbeddingRecord record_from_json(const json& obj, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no);
  if (!obj.is_object() || !obj.contains("id") || !obj.contains("label") || !obj.contains("embedding"))
    throw Error(ErrorCode::MalformedFile, where + ": expected {\"id\", \"label\", \"embedding\"}");
  if (!obj["id"].is_string() || !obj["label"].is_string() || !obj["embedding"].is_array())
    throw Error(ErrorCode::MalformedFile, where + ": wrong field types");
  EmbeddingRecord r;
  r.id = obj["id"].get<std::string>();
  r.label = obj["label"].get<std::string>();
  r.vector.reserve(obj["embedding"].size());
  for (const auto& v : obj["embedding"]) {
    if (!v.is_number()) throw Error(ErrorCode::NonFiniteValue, "record '" + r.id + "'");
    r.vector.push_back(static_cast<float>(v.get<double>()));
  }
  return r;
}

}  // namespace

EmbeddingPack parse_jsonl_pack(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  std::optional<std::vector<std::string>> labels;
  std::vector<std::string> inferred_labels;
  std::unordered_set<std::string> seen_labels;
  std::vector<EmbeddingRecord> records;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (first && obj.is_object() && obj.contains("dim") && !obj.contains("id")) {
      first = false;
      if (!obj["dim"].is_number_unsigned() || !obj.contains("labels") || !obj["labels"].is_array())
        throw Error(ErrorCode::MalformedFile, "header must be {\"dim\": int, \"labels\": [str,...]}");
      dim = obj["dim"].get<std::size_t>();
      labels = obj["labels"].get<std::vector<std::string>>();
      continue;
    }
    first = false;
    auto r = record_from_json(obj, line_no);
    if (!dim) dim = r.vector.size();
    if (!labels && seen_labels.insert(r.label).second) inferred_labels.push_back(r.label);
    records.push_back(std::move(r));
  }
  if (!dim) {
    // Empty file without header: an empty pack needs some dimension.
    throw Error(ErrorCode::MalformedFile, "JSONL pack has neither header nor records");
  }
  return EmbeddingPack::create(*dim, labels ? std::move(*labels) : std::move(inferred_labels),
                               std::move(records));
}

std::string encode_jsonl_pack(const EmbeddingPack& pack) {
  std::string out;
  json header = {{"dim", pack.dim()}, {"labels", pack.labels()}};
  out += header.dump();
  out += '\n';
  for (const auto& r : pack.records()) {
    out += "{\"embedding\":[";
    for (std::size_t i = 0; i < r.vector.size(); ++i) {
      if (i) out += ',';
      out += format_float(r.vector[i]);
    }
    out += "],\"id\":" + json(r.id).dump() + ",\"label\":" + json(r.label).dump() + "}\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary

std::pair<std::string, std::string> encode_binary_pack(const EmbeddingPack& pack) {
  std::vector<std::string> ids;
  std::vector<std::size_t> label_index;
  ids.reserve(pack.size());
  label_index.reserve(pack.size());
  std::string blob;
  blob.reserve(pack.size() * pack.dim() * 4);
  for (std::size_t i = 0; i < pack.size(); ++i) {
    ids.push_back(pack[i].id);
    label_index.push_back(pack.label_index(i));
    for (float v : pack[i].vector) io::put_f32(blob, v);
  }
  json manifest = {{"version", 1},         {"dim", pack.dim()}, {"count", pack.size()},
                   {"dtype", "f32le"},     {"labels", pack.labels()},
                   {"ids", std::move(ids)}, {"label_index", std::move(label_index)}};
  return {manifest.dump(), std::move(blob)};
}

EmbeddingPack decode_binary_pack(const std::string& manifest_json, const std::string& blob) {
  json m;
  try {
    m = json::parse(manifest_json);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedFile, std::string("manifest: ") + e.what());
  }
  std::size_t dim = 0, count = 0;
  std::vector<std::string> labels, ids;
  std::vector<std::size_t> label_index;
  try {
    if (m.at("version").get<int>() != 1)
      throw Error(ErrorCode::UnsupportedVersion, "pack manifest version " + m.at("version").dump());
    if (m.at("dtype").get<std::string>() != "f32le")
      throw Error(ErrorCode::MalformedFile, "unsupported dtype " + m.at("dtype").dump());
    dim = m.at("dim").get<std::size_t>();
    count = m.at("count").get<std::size_t>();
    labels = m.at("labels").get<std::vector<std::string>>();
    ids = m.at("ids").get<std::vector<std::string>>();
    label_index = m.at("label_index").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("manifest: ") + e.what());
  }
  if (ids.size() != count || label_index.size() != count)
    throw Error(ErrorCode::MalformedFile, "manifest ids/label_index length differs from count");
  if (blob.size() != count * dim * 4)
    throw Error(ErrorCode::BlobSizeMismatch, "expected " + std::to_string(count * dim * 4) +
                                                 " bytes for " + std::to_string(count) + "x" +
                                                 std::to_string(dim) + " f32, found " +
                                                 std::to_string(blob.size()));
  std::vector<EmbeddingRecord> records(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (label_index[i] >= labels.size())
      throw Error(ErrorCode::UnknownLabel, "record '" + ids[i] + "' has label index " +
                                               std::to_string(label_index[i]));
    records[i].id = ids[i];
    records[i].label = labels[label_index[i]];
    records[i].vector.resize(dim);
    const char* p = blob.data() + i * dim * 4;
    for (std::size_t k = 0; k < dim; ++k) records[i].vector[k] = io::get_f32(p + 4 * k);
  }
  return EmbeddingPack::create(dim, std::move(labels), std::move(records));
}

std::filesystem::path binary_stem(const std::filesystem::path& path) {
  const std::string s = path.string();
  if (io::ends_with(s, ".manifest.json")) return s.substr(0, s.size() - 14);
  if (io::ends_with(s, ".vec")) return s.substr(0, s.size() - 4);
  return path;
}

EmbeddingPack load_pack(const std::filesystem::path& path) {
  const std::string s = path.string();
  const bool binary = io::ends_with(s, ".manifest.json") || io::ends_with(s, ".vec") ||
                      (!std::filesystem::exists(path) &&
                       std::filesystem::exists(std::filesystem::path(s + ".manifest.json")));
  if (binary) {
    const std::string stem = binary_stem(path).string();
    return decode_binary_pack(io::read_file(stem + ".manifest.json"), io::read_file(stem + ".vec"));
  }
  return parse_jsonl_pack(io::read_file(path));
}

void save_pack(const EmbeddingPack& pack, const std::filesystem::path& path, PackFormat format) {
  if (format == PackFormat::Jsonl) {
    io::atomic_write(path, encode_jsonl_pack(pack));
    return;
  }
  const std::string stem = binary_stem(path).string();
  const auto [manifest, blob] = encode_binary_pack(pack);
  io::atomic_write(stem + ".vec", blob);
  io::atomic_write(stem + ".manifest.json", manifest);
}

// ---------------------------------------------------------------------------

EmbeddingPack select_records(const EmbeddingPack& pack, std::span<const std::size_t> positions) {
  std::vector<EmbeddingRecord> records;
  records.reserve(positions.size());
  for (auto p : positions) records.push_back(pack[p]);
  return EmbeddingPack::create(pack.dim(), pack.labels(), std::move(records));
}

std::pair<EmbeddingPack, EmbeddingPack> split_pack(const EmbeddingPack& pack,
                                                   const std::unordered_set<std::string>& ids) {
  for (const auto& id : ids)
    if (!pack.find(id)) throw Error(ErrorCode::UnknownId, "id '" + id + "' not in pack");
  std::vector<std::size_t> chosen, rest;
  for (std::size_t i = 0; i < pack.size(); ++i) (ids.contains(pack[i].id) ? chosen : rest).push_back(i);
  return {select_records(pack, chosen), select_records(pack, rest)};
}

}  // namespace keco
