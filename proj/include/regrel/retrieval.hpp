#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "regrel/corpus.hpp"
#include "regrel/evaluation.hpp"
#include "regrel/http_client.hpp"
#include "regrel/process.hpp"
#include "regrel/text.hpp"

namespace regrel {

// ---------------------------------------------------------------------------
// Lexical index

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    void validate() const;  // throws ValidationError
};

/// Inverted index with Okapi BM25 scoring and smoothed idf,
/// idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), which stays positive.
class LexicalIndex {
  public:
    /// Throws ValidationError on an empty paragraph list or duplicate ids.
    static LexicalIndex build(std::span<const Paragraph> paragraphs, Bm25Params params = {},
                              TokenizerOptions tokenizer = {});

    /// Sum over the distinct query terms. Throws NotFoundError for an unknown para_id.
    double score(std::string_view query, std::string_view para_id) const;

    /// Scores of every indexed paragraph, in index order.
    std::vector<double> score_all(std::string_view query) const;

    std::size_t size() const { return m_para_ids.size(); }
    const std::vector<std::string>& para_ids() const { return m_para_ids; }
    std::optional<std::size_t> position(std::string_view para_id) const;

    std::size_t df(const std::string& term) const;
    double idf(const std::string& term) const;
    std::size_t tf(const std::string& term, std::string_view para_id) const;
    std::size_t doc_length(std::string_view para_id) const;
    double avg_doc_length() const { return m_avg_length; }
    std::size_t vocabulary_size() const { return m_postings.size(); }

    const Bm25Params& params() const { return m_params; }
    const TokenizerOptions& tokenizer() const { return m_tokenizer; }

  private:
    struct Posting {
        std::size_t doc;
        std::size_t tf;
    };

    double term_weight(double idf, std::size_t tf, std::size_t doc) const;
    std::vector<std::string> query_terms(std::string_view query) const;
    std::size_t require(std::string_view para_id) const;

    Bm25Params m_params;
    TokenizerOptions m_tokenizer;
    std::vector<std::string> m_para_ids;
    std::unordered_map<std::string, std::size_t> m_positions;
    std::vector<std::size_t> m_lengths;
    double m_avg_length = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> m_postings;  // doc-ascending
};

double bm25_score(const LexicalIndex& index, std::string_view query, std::string_view para_id);

// ---------------------------------------------------------------------------
// Embeddings and cross-encoders

struct EmbeddingVector {
    std::vector<double> values;
    std::string provider_tag;

    std::size_t dim() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

/// Throws ValidationError on dim or tag mismatch, and "degenerate embedding" on a zero vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;

    /// One vector per text, all of one dimension and tagged with tag().
    /// Throws ValidationError on an empty batch, an empty text, or a dimension mismatch.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const;

    virtual std::string tag() const = 0;

  protected:
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const = 0;
};

/// Offline bi-encoder: signed feature hashing of tf-idf weights into `dim`
/// buckets, then L2 normalization. Token weights are raw term frequency times
/// the idf of the supplied index, so a text repeated twice embeds identically.
/// Texts without tokens map to the zero vector.
class HashedTfIdfEmbedder final : public EmbeddingProvider {
  public:
    explicit HashedTfIdfEmbedder(std::shared_ptr<const LexicalIndex> index, std::size_t dim = 256);

    std::string tag() const override;
    std::size_t dim() const { return m_dim; }

  protected:
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override;

  private:
    std::shared_ptr<const LexicalIndex> m_index;
    std::size_t m_dim;
};

using TextPair = std::pair<std::string, std::string>;

class CrossEncoder {
  public:
    virtual ~CrossEncoder() = default;

    /// Scores in [0, 1], one per pair. Out-of-range provider output is clamped and logged.
    std::vector<double> score(const std::vector<TextPair>& pairs) const;
    double score(std::string_view query, std::string_view passage) const;

    virtual std::string tag() const = 0;

  protected:
    virtual std::vector<double> score_batch(const std::vector<TextPair>& pairs) const = 0;
};

/// (1 + cos(embed(q), embed(p))) / 2 over the given bi-encoder. A degenerate
/// embedding on either side scores the midpoint 0.5.
class FallbackCrossEncoder final : public CrossEncoder {
  public:
    explicit FallbackCrossEncoder(std::shared_ptr<const EmbeddingProvider> embedder);

    std::string tag() const override;

  protected:
    std::vector<double> score_batch(const std::vector<TextPair>& pairs) const override;

  private:
    std::shared_ptr<const EmbeddingProvider> m_embedder;
};

/// `POST /embed {texts}` -> `{dim, vectors}`.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
  public:
    explicit RemoteEmbeddingProvider(HttpEndpoint endpoint, std::size_t batch_size = 64);

    std::string tag() const override;

  protected:
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override;

  private:
    HttpEndpoint m_endpoint;
    std::size_t m_batch_size;
};

/// `POST /cross {pairs}` -> `{scores}`.
class RemoteCrossEncoder final : public CrossEncoder {
  public:
    explicit RemoteCrossEncoder(HttpEndpoint endpoint, std::size_t batch_size = 64);

    std::string tag() const override;

  protected:
    std::vector<double> score_batch(const std::vector<TextPair>& pairs) const override;

  private:
    HttpEndpoint m_endpoint;
    std::size_t m_batch_size;
};

// ---------------------------------------------------------------------------
// Rankings and the two-stage pipeline

enum class RetrievalMethod { A_bm25_ce, B_bienc_ce };
enum class RankingStage { initial, reranked };

std::string_view to_string(RetrievalMethod method);
RetrievalMethod retrieval_method_from_string(std::string_view text);  // also accepts "A" and "B"
std::string_view to_string(RankingStage stage);
RankingStage ranking_stage_from_string(std::string_view text);

struct RankingEntry {
    std::string para_id;
    double score = 0.0;

    bool operator==(const RankingEntry&) const = default;
};

struct Ranking {
    std::string query_node_id;
    RetrievalMethod method = RetrievalMethod::A_bm25_ce;
    RankingStage stage = RankingStage::initial;
    std::vector<RankingEntry> entries;

    bool operator==(const Ranking&) const = default;
};

/// Score descending, then para_id ascending.
void sort_entries(std::vector<RankingEntry>& entries);

json to_json(const Ranking& ranking);
Ranking ranking_from_json(const json& j);

struct PipelineConfig {
    RetrievalMethod method = RetrievalMethod::A_bm25_ce;
    std::size_t initial_k = 100;
    /// Empty means "as many as the gold standard marks relevant".
    std::optional<std::size_t> final_k;
    QueryVerbosity verbosity = QueryVerbosity::description_only;

    void validate() const;
};

struct Providers {
    std::shared_ptr<const EmbeddingProvider> bi_encoder;
    std::shared_ptr<const CrossEncoder> cross_encoder;
};

/// Deterministic offline providers backed by `index`.
Providers fallback_providers(std::shared_ptr<const LexicalIndex> index, std::size_t dim = 256);

/// Providers reached over HTTP. Endpoints come from REGREL_EMBED_URL/TOKEN and
/// REGREL_CROSS_URL/TOKEN.
Providers remote_providers_from_env();

struct PipelineRun {
    Ranking initial;
    Ranking reranked;
    std::vector<std::string> warnings;
};

/// Runs both methods over one study set. The index is shared; paragraph
/// embeddings for method B are computed once on first use.
class Retriever {
  public:
    Retriever(const StudySet& set, std::shared_ptr<const LexicalIndex> index, Providers providers);

    PipelineRun run(const ProcessModel& model, std::string_view node_id, const PipelineConfig& config) const;

    /// Fans out over nodes with at most `in_flight` concurrent runs. Results keep the order of `node_ids`.
    std::vector<PipelineRun> run_many(const ProcessModel& model, const std::vector<std::string>& node_ids,
                                      const PipelineConfig& config, std::size_t in_flight = 4) const;

    const LexicalIndex& index() const { return *m_index; }
    const std::vector<EmbeddingVector>& paragraph_embeddings() const;

  private:
    std::vector<std::string> m_para_ids;
    std::vector<std::string> m_bodies;
    std::shared_ptr<const LexicalIndex> m_index;
    Providers m_providers;
    mutable std::once_flag m_embed_once;
    mutable std::vector<EmbeddingVector> m_embeddings;
};

/// The min(k, size) best para_ids. Appends a warning when k had to be clamped.
std::vector<std::string> binarize_top_k(const Ranking& ranking, std::size_t k,
                                        std::vector<std::string>* warnings = nullptr);

/// Number of gold-relevant paragraphs for the node (level 1: the process).
std::size_t gold_relevant_count(const GoldStandard& gold, const ProcessModel& model, std::string_view node_id);

/// Labels the selected paragraphs relevant (informative) for each ranked
/// node, everything else irrelevant, then applies the propagation closure.
Predictions selections_to_predictions(const StudySet& set, const ProcessModel& model,
                                      const std::vector<std::pair<std::string, std::vector<std::string>>>& selected);

}  // namespace regrel
