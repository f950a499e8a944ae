#include <algorithm>

#include "regrel/error.hpp"
#include "regrel/parallel.hpp"
#include "regrel/retrieval.hpp"

namespace regrel {

std::string_view to_string(RetrievalMethod method)
{
    return method == RetrievalMethod::A_bm25_ce ? "A_bm25_ce" : "B_bienc_ce";
}

RetrievalMethod retrieval_method_from_string(std::string_view text)
{
    if (text == "A" || text == "A_bm25_ce") {
        return RetrievalMethod::A_bm25_ce;
    }
    if (text == "B" || text == "B_bienc_ce") {
        return RetrievalMethod::B_bienc_ce;
    }
    throw ValidationError("unknown retrieval method '" + std::string(text) + "' (expected A or B)");
}

std::string_view to_string(RankingStage stage)
{
    return stage == RankingStage::initial ? "initial" : "reranked";
}

RankingStage ranking_stage_from_string(std::string_view text)
{
    if (text == "initial") {
        return RankingStage::initial;
    }
    if (text == "reranked") {
        return RankingStage::reranked;
    }
    throw ValidationError("unknown ranking stage '" + std::string(text) + "'");
}

void sort_entries(std::vector<RankingEntry>& entries)
{
    std::sort(entries.begin(), entries.end(), [](const RankingEntry& a, const RankingEntry& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.para_id < b.para_id;
    });
}

json to_json(const Ranking& ranking)
{
    json entries = json::array();
    for (const auto& entry : ranking.entries) {
        entries.push_back({{"para_id", entry.para_id}, {"score", entry.score}});
    }
    return json{{"query_node_id", ranking.query_node_id},
                {"method", to_string(ranking.method)},
                {"stage", to_string(ranking.stage)},
                {"entries", entries}};
}

Ranking ranking_from_json(const json& j)
{
    try {
        Ranking ranking;
        ranking.query_node_id = j.at("query_node_id").get<std::string>();
        ranking.method = retrieval_method_from_string(j.at("method").get<std::string>());
        ranking.stage = ranking_stage_from_string(j.value("stage", std::string("reranked")));
        for (const auto& e : j.at("entries")) {
            ranking.entries.push_back({e.at("para_id").get<std::string>(), e.at("score").get<double>()});
        }
        return ranking;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed ranking record: ") + e.what());
    }
}

void PipelineConfig::validate() const
{
    if (initial_k == 0) {
        throw ValidationError("initial_k must be positive");
    }
    if (final_k && *final_k == 0) {
        throw ValidationError("final_k must be positive");
    }
    if (final_k && *final_k > initial_k) {
        throw ValidationError("final_k (" + std::to_string(*final_k) + ") exceeds initial_k (" +
                              std::to_string(initial_k) + ")");
    }
}

Providers fallback_providers(std::shared_ptr<const LexicalIndex> index, std::size_t dim)
{
    auto embedder = std::make_shared<HashedTfIdfEmbedder>(std::move(index), dim);
    return {embedder, std::make_shared<FallbackCrossEncoder>(embedder)};
}

Retriever::Retriever(const StudySet& set, std::shared_ptr<const LexicalIndex> index, Providers providers)
    : m_index(std::move(index)), m_providers(std::move(providers))
{
    if (!m_index) {
        throw ValidationError("retriever needs a lexical index");
    }
    if (!m_providers.cross_encoder) {
        throw ValidationError("retriever needs a cross-encoder");
    }
    if (set.paragraphs.size() != m_index->size()) {
        throw ValidationError("lexical index does not match the study set");
    }
    // Keep the index order so both stages address paragraphs by the same position.
    m_bodies.resize(m_index->size());
    for (const auto& para : set.paragraphs) {
        auto pos = m_index->position(para.para_id);
        if (!pos) {
            throw ValidationError("paragraph '" + para.para_id + "' is missing from the lexical index");
        }
        m_bodies[*pos] = para.body;
    }
    m_para_ids = m_index->para_ids();
}

const std::vector<EmbeddingVector>& Retriever::paragraph_embeddings() const
{
    std::call_once(m_embed_once, [this] {
        if (!m_providers.bi_encoder) {
            throw ValidationError("method B needs a bi-encoder");
        }
        m_embeddings = m_providers.bi_encoder->embed(m_bodies);
    });
    return m_embeddings;
}

PipelineRun Retriever::run(const ProcessModel& model, std::string_view node_id, const PipelineConfig& config) const
{
    config.validate();
    model.at(node_id);
    const auto query = node_query_text(model, node_id, config.verbosity);
    if (query.empty()) {
        throw ValidationError("node '" + std::string(node_id) + "' has no description to query with");
    }

    PipelineRun run;
    const auto n = m_para_ids.size();

    std::vector<double> scores;
    if (config.method == RetrievalMethod::A_bm25_ce) {
        scores = m_index->score_all(query);
    } else {
        const auto& passages = paragraph_embeddings();
        const auto query_vec = m_providers.bi_encoder->embed({query}).front();
        scores.resize(n);
        std::size_t degenerate = 0;
        for (std::size_t i = 0; i < n; ++i) {
            try {
                scores[i] = cosine_similarity(query_vec, passages[i]);
            } catch (const ValidationError&) {
                scores[i] = 0.0;
                ++degenerate;
            }
        }
        if (degenerate > 0) {
            run.warnings.push_back(std::to_string(degenerate) + " degenerate embeddings scored as 0 for node '" +
                                   std::string(node_id) + "'");
        }
    }

    std::vector<RankingEntry> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        entries.push_back({m_para_ids[i], scores[i]});
    }
    sort_entries(entries);

    auto k = config.initial_k;
    if (k > n) {
        run.warnings.push_back("initial_k " + std::to_string(k) + " exceeds study set size " + std::to_string(n) +
                               "; clamped");
        k = n;
    }
    entries.resize(k);
    run.initial = {std::string(node_id), config.method, RankingStage::initial, entries};

    std::vector<TextPair> pairs;
    pairs.reserve(k);
    for (const auto& entry : entries) {
        pairs.emplace_back(query, m_bodies[*m_index->position(entry.para_id)]);
    }
    const auto cross = m_providers.cross_encoder->score(pairs);
    for (std::size_t i = 0; i < k; ++i) {
        entries[i].score = cross[i];
    }
    sort_entries(entries);
    run.reranked = {std::string(node_id), config.method, RankingStage::reranked, std::move(entries)};
    return run;
}

std::vector<PipelineRun> Retriever::run_many(const ProcessModel& model, const std::vector<std::string>& node_ids,
                                             const PipelineConfig& config, std::size_t in_flight) const
{
    if (config.method == RetrievalMethod::B_bienc_ce) {
        paragraph_embeddings();
    }
    std::vector<PipelineRun> runs(node_ids.size());
    parallel_for(node_ids.size(), in_flight, [&](std::size_t i) { runs[i] = run(model, node_ids[i], config); });
    return runs;
}

std::vector<std::string> binarize_top_k(const Ranking& ranking, std::size_t k, std::vector<std::string>* warnings)
{
    if (k > ranking.entries.size()) {
        if (warnings != nullptr) {
            warnings->push_back("k " + std::to_string(k) + " exceeds ranking length " +
                                std::to_string(ranking.entries.size()) + " for node '" + ranking.query_node_id +
                                "'; clamped");
        }
        k = ranking.entries.size();
    }
    auto entries = ranking.entries;
    sort_entries(entries);
    std::vector<std::string> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(entries[i].para_id);
    }
    return out;
}

std::size_t gold_relevant_count(const GoldStandard& gold, const ProcessModel& model, std::string_view node_id)
{
    const auto& node = model.at(node_id);
    std::size_t count = 0;
    for (const auto& [para_id, entry] : gold.labels) {
        const auto type =
            node.level == Level::process ? entry.labels.level1 : entry.labels.at(node.level, node.node_id);
        count += is_relevant(type) ? 1 : 0;
    }
    return count;
}

Predictions selections_to_predictions(const StudySet& set, const ProcessModel& model,
                                      const std::vector<std::pair<std::string, std::vector<std::string>>>& selected)
{
    Predictions out;
    for (const auto& para : set.paragraphs) {
        out.emplace(para.para_id, LabelSet{});
    }
    for (const auto& [node_id, para_ids] : selected) {
        const auto& node = model.at(node_id);
        for (const auto& para_id : para_ids) {
            auto it = out.find(para_id);
            if (it == out.end()) {
                throw NotFoundError("selected paragraph '" + para_id + "' is not in the study set");
            }
            auto& labels = it->second;
            switch (node.level) {
            case Level::process:
                labels.level1 = RelevanceType::informative;
                break;
            case Level::subprocess:
                labels.level2[node.node_id] = RelevanceType::informative;
                break;
            case Level::task:
                labels.level3[node.node_id] = RelevanceType::informative;
                break;
            }
        }
    }
    return normalize_predictions(out, model);
}

}  // namespace regrel
