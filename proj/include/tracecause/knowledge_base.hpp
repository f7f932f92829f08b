#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tracecause/http_backend.hpp"
#include "tracecause/llm_gateway.hpp"

namespace tracecause {

using json = nlohmann::json;

inline constexpr int kKbSchemaVersion = 1;
inline constexpr int kDefaultExemplarCount = 2;

enum class KbSource { gaia, assistantbench };

std::string_view to_string(KbSource source);
/// Display name used in injected exemplars ("GAIA", "AssistantBench").
std::string_view display_name(KbSource source);

struct KbEntry {
  std::string entry_id;
  KbSource source = KbSource::gaia;
  std::string text;
  std::string origin_task_id;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dim() const noexcept { return values.size(); }
};

/// Plain cosine similarity; 0 when either vector has zero norm.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
EmbeddingVector l2_normalized(EmbeddingVector v);

/// Ranking key of a similarity score: scores equal to 12 decimals tie and fall back to the
/// entry-id order.
long long retrieval_score_key(double score);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::size_t dim() const = 0;
  /// Configuration stamped into a persisted knowledge base.
  virtual json describe() const = 0;
};

/// Hashed bag of unigrams and bigrams with sublinear (1 + ln tf) term weights, L2-normalized.
/// Fully deterministic and offline.
class LexicalEmbedder final : public Embedder {
 public:
  explicit LexicalEmbedder(std::size_t dim = 1024);
  EmbeddingVector embed(std::string_view text) override;
  std::size_t dim() const override { return dim_; }
  json describe() const override;

 private:
  std::size_t dim_;
};

struct RemoteEmbedderConfig {
  std::string endpoint;  // OpenAI-compatible /embeddings URL
  std::string model;
  std::string api_key_env = "TRACECAUSE_API_KEY";
  std::size_t dim = 0;   // 0: taken from the first response
  RetryPolicy retry{};
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);
  EmbeddingVector embed(std::string_view text) override;
  std::size_t dim() const override { return config_.dim; }
  json describe() const override;

 private:
  RemoteEmbedderConfig config_;
  std::string api_key_;
};

/// Builds an embedder from its `describe()` document.
std::unique_ptr<Embedder> make_embedder(const json& description);

struct ScoredEntry {
  KbEntry entry;
  double score = 0.0;
};

struct RetrievalResult {
  std::vector<ScoredEntry> entries;
  bool short_result = false;  // fewer than k entries survived exclusion
};

struct KbBuildReport {
  std::size_t gaia_count = 0;
  std::size_t assistantbench_count = 0;
  std::vector<std::string> warnings;
};

/// Immutable exemplar store. Vectors are kept L2-normalized so similarity is a dot product.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  /// Pairs entries with (not necessarily normalized) vectors of one common dimension.
  KnowledgeBase(std::vector<KbEntry> entries, std::vector<EmbeddingVector> vectors, json embedder = json::object());

  const std::vector<KbEntry>& entries() const noexcept { return entries_; }
  const std::vector<EmbeddingVector>& vectors() const noexcept { return vectors_; }
  const json& embedder_description() const noexcept { return embedder_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t count(KbSource source) const;

  /// Top-k by cosine similarity to `query`; ties (see retrieval_score_key) broken by ascending
  /// entry id. Entries whose origin task equals `exclude_task_id` are removed before ranking.
  RetrievalResult retrieve(const EmbeddingVector& query, int k, std::string_view exclude_task_id) const;
  RetrievalResult retrieve(Embedder& embedder, std::string_view query_text, int k,
                           std::string_view exclude_task_id) const;

  void save(const std::filesystem::path& dir) const;
  static KnowledgeBase load(const std::filesystem::path& dir);

 private:
  std::vector<KbEntry> entries_;
  std::vector<EmbeddingVector> vectors_;
  json embedder_ = json::object();
  std::size_t dim_ = 0;
};

struct KbSources {
  std::filesystem::path gaia;            // GAIA metadata (JSON lines or JSON array)
  std::filesystem::path assistantbench;  // AssistantBench tasks (JSON lines or JSON array)
  std::filesystem::path selection;       // AssistantBench ids to include, one per line
};

/// GAIA records lacking step annotations are skipped with a warning; every selected
/// AssistantBench id must exist in the source.
KnowledgeBase build_kb(const KbSources& sources, Embedder& embedder, KbBuildReport* report = nullptr);

std::vector<KbEntry> read_gaia_entries(const std::filesystem::path& path, std::vector<std::string>* warnings);
std::vector<KbEntry> read_assistantbench_entries(const std::filesystem::path& path,
                                                 const std::vector<std::string>& selection);
std::vector<std::string> read_selection_list(const std::filesystem::path& path);

/// Renders retrieved exemplars the way they are injected into prompts.
std::string render_exemplars(const RetrievalResult& result);

}  // namespace tracecause
