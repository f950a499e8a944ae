#include <algorithm>
#include <cmath>
#include <map>

#include "regrel/error.hpp"
#include "regrel/retrieval.hpp"

namespace regrel {

void Bm25Params::validate() const
{
    if (!(k1 > 0.0) || !std::isfinite(k1)) {
        throw ValidationError("bm25 k1 must be positive");
    }
    if (!(b >= 0.0 && b <= 1.0)) {
        throw ValidationError("bm25 b must lie in [0, 1]");
    }
}

LexicalIndex LexicalIndex::build(std::span<const Paragraph> paragraphs, Bm25Params params, TokenizerOptions tokenizer)
{
    params.validate();
    if (paragraphs.empty()) {
        throw ValidationError("cannot index an empty study set");
    }

    LexicalIndex index;
    index.m_params = params;
    index.m_tokenizer = std::move(tokenizer);
    index.m_para_ids.reserve(paragraphs.size());
    index.m_lengths.reserve(paragraphs.size());

    std::size_t total_length = 0;
    for (std::size_t doc = 0; doc < paragraphs.size(); ++doc) {
        const auto& para = paragraphs[doc];
        if (!index.m_positions.emplace(para.para_id, doc).second) {
            throw ValidationError("duplicate para_id '" + para.para_id + "' in index input");
        }
        index.m_para_ids.push_back(para.para_id);

        auto tokens = tokenize(para.body, index.m_tokenizer);
        index.m_lengths.push_back(tokens.size());
        total_length += tokens.size();

        std::map<std::string, std::size_t> counts;
        for (auto& token : tokens) {
            ++counts[std::move(token)];
        }
        for (auto& [term, tf] : counts) {
            index.m_postings[term].push_back({doc, tf});
        }
    }
    index.m_avg_length = static_cast<double>(total_length) / static_cast<double>(paragraphs.size());
    return index;
}

std::optional<std::size_t> LexicalIndex::position(std::string_view para_id) const
{
    auto it = m_positions.find(std::string(para_id));
    if (it == m_positions.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t LexicalIndex::require(std::string_view para_id) const
{
    auto pos = position(para_id);
    if (!pos) {
        throw NotFoundError("paragraph '" + std::string(para_id) + "' is not in the index");
    }
    return *pos;
}

std::size_t LexicalIndex::df(const std::string& term) const
{
    auto it = m_postings.find(term);
    return it == m_postings.end() ? 0 : it->second.size();
}

double LexicalIndex::idf(const std::string& term) const
{
    const auto n = static_cast<double>(size());
    const auto d = static_cast<double>(df(term));
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

std::size_t LexicalIndex::tf(const std::string& term, std::string_view para_id) const
{
    const auto doc = require(para_id);
    auto it = m_postings.find(term);
    if (it == m_postings.end()) {
        return 0;
    }
    auto hit = std::lower_bound(it->second.begin(), it->second.end(), doc,
                                [](const Posting& p, std::size_t d) { return p.doc < d; });
    return hit != it->second.end() && hit->doc == doc ? hit->tf : 0;
}

std::size_t LexicalIndex::doc_length(std::string_view para_id) const
{
    return m_lengths[require(para_id)];
}

double LexicalIndex::term_weight(double idf, std::size_t tf, std::size_t doc) const
{
    const double f = static_cast<double>(tf);
    const double norm = 1.0 - m_params.b + m_params.b * static_cast<double>(m_lengths[doc]) / m_avg_length;
    return idf * f * (m_params.k1 + 1.0) / (f + m_params.k1 * norm);
}

std::vector<std::string> LexicalIndex::query_terms(std::string_view query) const
{
    auto terms = tokenize(query, m_tokenizer);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    return terms;
}

double LexicalIndex::score(std::string_view query, std::string_view para_id) const
{
    const auto doc = require(para_id);
    double total = 0.0;
    for (const auto& term : query_terms(query)) {
        const auto f = tf(term, para_id);
        if (f > 0) {
            total += term_weight(idf(term), f, doc);
        }
    }
    return total;
}

std::vector<double> LexicalIndex::score_all(std::string_view query) const
{
    // Accumulates in the same term order as score(), so both give identical doubles.
    std::vector<double> scores(size(), 0.0);
    for (const auto& term : query_terms(query)) {
        auto it = m_postings.find(term);
        if (it == m_postings.end()) {
            continue;
        }
        const double term_idf = idf(term);
        for (const auto& posting : it->second) {
            scores[posting.doc] += term_weight(term_idf, posting.tf, posting.doc);
        }
    }
    return scores;
}

double bm25_score(const LexicalIndex& index, std::string_view query, std::string_view para_id)
{
    return index.score(query, para_id);
}

}  // namespace regrel
