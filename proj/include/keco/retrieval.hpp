#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "keco/coreset.hpp"
#include "keco/embedding_store.hpp"

namespace keco {

/// Cosine is the default everywhere; Dot scores raw inner products.
enum class SimilarityMetric { Cosine, Dot };

SimilarityMetric parse_similarity_metric(std::string_view s);

struct RankedDemo {
  std::size_t index = 0;  // coreset index
  std::string source_id;
  std::string label;
  double score = 0.0;
};

struct RetrievalResult {
  std::string query_id;
  std::vector<RankedDemo> ranked;  // non-increasing score, ties by lower index
};

/// Exhaustive scan over every key; class labels are ignored.
/// Throws ShotCountExceedsCoreset when k > coreset size, InvalidConfig for k == 0.
RetrievalResult retrieve_topk(const Coreset& coreset, const EmbeddingRecord& query, std::size_t k,
                              SimilarityMetric metric = SimilarityMetric::Cosine);

/// Asc puts the most similar demonstration last, next to the query.
enum class DemoOrder { Asc, Desc };

DemoOrder parse_demo_order(std::string_view s);
std::vector<RankedDemo> assemble_sequence(const RetrievalResult& result, DemoOrder order = DemoOrder::Asc);

// ---------------------------------------------------------------------------
// Multiple-choice prompts

struct ChoiceBlock {
  std::array<std::string, 4> options;
  char correct_letter = 'A';
};

/// Correct label plus three distinct distractors from `labels`, positions
/// drawn from the generator seeded with `stream_seed`.
ChoiceBlock make_choice_block(std::span<const std::string> labels, const std::string& correct,
                              std::uint64_t stream_seed);

/// "<image> Which of these choices is shown in the image? Choices: A.x, ..."
std::string render_question(const ChoiceBlock& block);

struct DemoPrompt {
  std::string image_ref;
  std::string prompt_text;  // question followed by the answer letter
  char answer_letter = 'A';
  ChoiceBlock choices;
};

struct PromptRecord {
  std::string query_id;
  std::size_t shots = 0;
  std::vector<DemoPrompt> demos;
  std::string query_prompt_text;
  ChoiceBlock query_choices;
  char correct_letter = 'A';

  nlohmann::json to_json() const;
};

struct PromptOptions {
  std::size_t shots = 2;
  std::uint64_t seed = 0;
  DemoOrder order = DemoOrder::Asc;
  SimilarityMetric metric = SimilarityMetric::Cosine;
};

/// One record per test sample, in test-pack order.
std::vector<PromptRecord> build_prompts(const Coreset& coreset, const EmbeddingPack& test_pack,
                                        const PromptOptions& options);

/// Writes build_prompts() as JSONL. Returns the record count.
std::size_t emit_prompts(const Coreset& coreset, const EmbeddingPack& test_pack, const PromptOptions& options,
                         const std::filesystem::path& out_path);

}  // namespace keco
