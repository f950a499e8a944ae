#include <algorithm>
#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

#include "regrel/error.hpp"
#include "regrel/retrieval.hpp"

namespace regrel {

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b)
{
    if (a.dim() != b.dim()) {
        throw ValidationError("cannot compare embeddings of dimension " + std::to_string(a.dim()) + " and " +
                              std::to_string(b.dim()));
    }
    if (a.provider_tag != b.provider_tag) {
        throw ValidationError("cannot compare embeddings from providers '" + a.provider_tag + "' and '" +
                              b.provider_tag + "'");
    }
    double dot = 0.0;
    double norm_a = 0.0;
    double norm_b = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values[i] * b.values[i];
        norm_a += a.values[i] * a.values[i];
        norm_b += b.values[i] * b.values[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0) {
        throw ValidationError("degenerate embedding");
    }
    return std::clamp(dot / (std::sqrt(norm_a) * std::sqrt(norm_b)), -1.0, 1.0);
}

std::vector<EmbeddingVector> EmbeddingProvider::embed(const std::vector<std::string>& texts) const
{
    if (texts.empty()) {
        throw ValidationError("embed: empty batch");
    }
    for (const auto& text : texts) {
        if (text.empty()) {
            throw ValidationError("embed: empty text");
        }
    }
    auto vectors = embed_batch(texts);
    if (vectors.size() != texts.size()) {
        throw ValidationError("embed: provider returned " + std::to_string(vectors.size()) + " vectors for " +
                              std::to_string(texts.size()) + " texts");
    }
    for (auto& v : vectors) {
        if (v.dim() == 0 || v.dim() != vectors.front().dim()) {
            throw ValidationError("embed: dimension mismatch within a batch");
        }
        v.provider_tag = tag();
    }
    return vectors;
}

HashedTfIdfEmbedder::HashedTfIdfEmbedder(std::shared_ptr<const LexicalIndex> index, std::size_t dim)
    : m_index(std::move(index)), m_dim(dim)
{
    if (!m_index) {
        throw ValidationError("hashed embedder needs a lexical index");
    }
    if (m_dim == 0) {
        throw ValidationError("embedding dimension must be positive");
    }
}

std::string HashedTfIdfEmbedder::tag() const
{
    return "hashed-tfidf-" + std::to_string(m_dim);
}

std::vector<EmbeddingVector> HashedTfIdfEmbedder::embed_batch(const std::vector<std::string>& texts) const
{
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::map<std::string, std::size_t> counts;
        for (auto& token : tokenize(text, m_index->tokenizer())) {
            ++counts[std::move(token)];
        }

        std::vector<double> values(m_dim, 0.0);
        for (const auto& [term, tf] : counts) {
            const auto h = fnv1a64(term);
            const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
            values[h % m_dim] += sign * static_cast<double>(tf) * m_index->idf(term);
        }
        double norm = 0.0;
        for (double v : values) {
            norm += v * v;
        }
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& v : values) {
                v /= norm;
            }
        }
        out.push_back({std::move(values), {}});
    }
    return out;
}

std::vector<double> CrossEncoder::score(const std::vector<TextPair>& pairs) const
{
    if (pairs.empty()) {
        return {};
    }
    for (const auto& [query, passage] : pairs) {
        if (query.empty() || passage.empty()) {
            throw ValidationError("cross_score: query and passage must be non-empty");
        }
    }
    auto scores = score_batch(pairs);
    if (scores.size() != pairs.size()) {
        throw ValidationError("cross_score: provider returned " + std::to_string(scores.size()) + " scores for " +
                              std::to_string(pairs.size()) + " pairs");
    }
    for (auto& s : scores) {
        if (std::isnan(s)) {
            spdlog::warn("cross-encoder '{}' returned NaN, clamped to 0", tag());
            s = 0.0;
        } else if (s < 0.0 || s > 1.0) {
            spdlog::warn("cross-encoder '{}' returned {} outside [0, 1], clamped", tag(), s);
            s = std::clamp(s, 0.0, 1.0);
        }
    }
    return scores;
}

double CrossEncoder::score(std::string_view query, std::string_view passage) const
{
    return score(std::vector<TextPair>{{std::string(query), std::string(passage)}}).front();
}

FallbackCrossEncoder::FallbackCrossEncoder(std::shared_ptr<const EmbeddingProvider> embedder)
    : m_embedder(std::move(embedder))
{
    if (!m_embedder) {
        throw ValidationError("fallback cross-encoder needs an embedding provider");
    }
}

std::string FallbackCrossEncoder::tag() const
{
    return "fallback-cross(" + m_embedder->tag() + ")";
}

std::vector<double> FallbackCrossEncoder::score_batch(const std::vector<TextPair>& pairs) const
{
    // Each distinct text is embedded once.
    std::map<std::string, std::size_t> slot;
    std::vector<std::string> texts;
    for (const auto& [query, passage] : pairs) {
        for (const auto* text : {&query, &passage}) {
            if (slot.emplace(*text, texts.size()).second) {
                texts.push_back(*text);
            }
        }
    }
    const auto vectors = m_embedder->embed(texts);

    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const auto& [query, passage] : pairs) {
        try {
            scores.push_back((1.0 + cosine_similarity(vectors[slot.at(query)], vectors[slot.at(passage)])) / 2.0);
        } catch (const ValidationError&) {
            scores.push_back(0.5);
        }
    }
    return scores;
}

}  // namespace regrel
