#include "keco/retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "keco/error.hpp"
#include "keco/io_util.hpp"
#include "keco/parallel.hpp"
#include "keco/rng.hpp"
#include "keco/similarity.hpp"
#include "keco/vec_math.hpp"

namespace keco {

namespace {

constexpr std::uint64_t kChoiceTag = 0x43484f49;  // "CHOI"
constexpr std::array<char, 4> kLetters = {'A', 'B', 'C', 'D'};

}  // namespace

SimilarityMetric parse_similarity_metric(std::string_view s) {
  if (s == "cosine") return SimilarityMetric::Cosine;
  if (s == "dot") return SimilarityMetric::Dot;
  throw Error(ErrorCode::InvalidConfig, "unknown similarity '" + std::string(s) + "' (cosine|dot)");
}

DemoOrder parse_demo_order(std::string_view s) {
  if (s == "asc") return DemoOrder::Asc;
  if (s == "desc") return DemoOrder::Desc;
  throw Error(ErrorCode::InvalidConfig, "unknown demonstration order '" + std::string(s) + "' (asc|desc)");
}

RetrievalResult retrieve_topk(const Coreset& coreset, const EmbeddingRecord& query, std::size_t k,
                              SimilarityMetric metric) {
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "shot count must be >= 1");
  if (k > coreset.size())
    throw Error(ErrorCode::ShotCountExceedsCoreset,
                std::to_string(k) + " shots requested from " + std::to_string(coreset.size()) + " entries");
  if (query.vector.size() != coreset.dim())
    throw Error(ErrorCode::DimensionMismatch, "query '" + query.id + "' dimension");

  std::vector<double> scores(coreset.size());
  for (std::size_t i = 0; i < coreset.size(); ++i)
    scores[i] = metric == SimilarityMetric::Cosine ? cosine_similarity(coreset[i].key_view(), query.view())
                                                   : dot(coreset[i].key_view(), query.view());
  std::vector<std::size_t> order(coreset.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  RetrievalResult result{query.id, {}};
  result.ranked.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const auto i = order[r];
    result.ranked.push_back({i, coreset[i].source_id, coreset[i].label, scores[i]});
  }
  return result;
}

std::vector<RankedDemo> assemble_sequence(const RetrievalResult& result, DemoOrder order) {
  std::vector<RankedDemo> seq = result.ranked;
  if (order == DemoOrder::Asc) std::reverse(seq.begin(), seq.end());
  return seq;
}

ChoiceBlock make_choice_block(std::span<const std::string> labels, const std::string& correct,
                              std::uint64_t stream_seed) {
  std::vector<std::string> others;
  bool found = false;
  for (const auto& l : labels) {
    if (l == correct) {
      found = true;
    } else {
      others.push_back(l);
    }
  }
  if (!found) throw Error(ErrorCode::UnknownLabel, "'" + correct + "' not among choice labels");
  if (others.size() < 3)
    throw Error(ErrorCode::InsufficientChoices,
                "need at least 4 classes for a 4-option block, have " + std::to_string(others.size() + 1));
  Rng rng(stream_seed);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto j = t + static_cast<std::size_t>(rng.uniform_index(others.size() - t));
    std::swap(others[t], others[j]);
  }
  const auto slot = static_cast<std::size_t>(rng.uniform_index(4));
  ChoiceBlock block;
  std::size_t d = 0;
  for (std::size_t i = 0; i < 4; ++i) block.options[i] = i == slot ? correct : others[d++];
  block.correct_letter = kLetters[slot];
  return block;
}

std::string render_question(const ChoiceBlock& block) {
  std::string s = "<image> Which of these choices is shown in the image? Choices: ";
  for (std::size_t i = 0; i < 4; ++i) {
    if (i) s += ", ";
    s += kLetters[i];
    s += '.';
    s += block.options[i];
  }
  s += " Answer with the letter from the given choices directly.";
  return s;
}

nlohmann::json PromptRecord::to_json() const {
  nlohmann::json demo_list = nlohmann::json::array();
  for (const auto& d : demos)
    demo_list.push_back({{"image_ref", d.image_ref},
                         {"prompt_text", d.prompt_text},
                         {"answer_letter", std::string(1, d.answer_letter)}});
  return {{"query_id", query_id},
          {"shots", shots},
          {"demos", std::move(demo_list)},
          {"query", {{"image_ref", query_id}, {"prompt_text", query_prompt_text}}},
          {"correct_letter", std::string(1, correct_letter)}};
}

std::vector<PromptRecord> build_prompts(const Coreset& coreset, const EmbeddingPack& test_pack,
                                        const PromptOptions& options) {
  const auto& labels = coreset.labels();
  if (labels.size() < 4)
    throw Error(ErrorCode::InsufficientChoices, "label space has " + std::to_string(labels.size()) + " classes");
  for (const auto& l : test_pack.labels())
    if (!coreset.class_index(l)) throw Error(ErrorCode::UnknownLabel, "test label '" + l + "' not in coreset");

  std::vector<PromptRecord> records(test_pack.size());
  parallel_for(test_pack.size(), [&](std::size_t q) {
    const auto& query = test_pack[q];
    const auto result = retrieve_topk(coreset, query, options.shots, options.metric);
    PromptRecord rec;
    rec.query_id = query.id;
    rec.shots = options.shots;
    const auto seq = assemble_sequence(result, options.order);
    for (std::size_t d = 0; d < seq.size(); ++d) {
      DemoPrompt demo;
      demo.image_ref = seq[d].source_id;
      demo.choices = make_choice_block(labels, seq[d].label, derive_seed(options.seed, {kChoiceTag, q, d}));
      demo.answer_letter = demo.choices.correct_letter;
      demo.prompt_text = render_question(demo.choices) + " " + demo.answer_letter;
      rec.demos.push_back(std::move(demo));
    }
    rec.query_choices =
        make_choice_block(labels, query.label, derive_seed(options.seed, {kChoiceTag, q, options.shots}));
    rec.query_prompt_text = render_question(rec.query_choices);
    rec.correct_letter = rec.query_choices.correct_letter;
    records[q] = std::move(rec);
  });
  return records;
}

std::size_t emit_prompts(const Coreset& coreset, const EmbeddingPack& test_pack, const PromptOptions& options,
                         const std::filesystem::path& out_path) {
  const auto records = build_prompts(coreset, test_pack, options);
  std::string out;
  for (const auto& r : records) {
    out += r.to_json().dump();
    out += '\n';
  }
  io::atomic_write(out_path, out);
  return records.size();
}

}  // namespace keco
