#include <doctest.h>

#include <cmath>
#include <set>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "regrel/error.hpp"
#include "regrel/json_io.hpp"
#include "regrel/retrieval.hpp"

using namespace regrel;
using namespace regrel::testing;

namespace {

bool close_relative(double a, double b, double tolerance = 1e-9)
{
    return std::abs(a - b) <= tolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

Paragraph paragraph(std::string id, std::string body)
{
    Paragraph p;
    p.para_id = std::move(id);
    p.doc_id = "doc";
    p.section_title = "s";
    p.body = std::move(body);
    return p;
}

/// Model P > S > T whose node descriptions are the given queries.
ProcessModel query_model(const std::string& process, const std::string& sub, const std::string& task)
{
    ProcessModel m;
    m.model_id = "q";
    m.context = {"q", "here", "test", "small"};
    m.nodes = {{"P", Level::process, "P", process, std::nullopt, NodeKind::process},
               {"S", Level::subprocess, "S", sub, std::string("P"), NodeKind::subprocess},
               {"T", Level::task, "T", task, std::string("S"), NodeKind::task}};
    validate_process(m);
    return m;
}

/// The two-stage pipeline recomputed from scratch: score every paragraph one
/// by one, keep the best k, score those pairs one by one with the cross-encoder.
std::pair<std::vector<RankingEntry>, std::vector<RankingEntry>>
exhaustive_pipeline(const RandomCorpus& corpus, const std::string& query, const std::vector<std::string>& query_terms,
                    RetrievalMethod method, std::size_t k, const Providers& providers)
{
    std::vector<RankingEntry> all;
    EmbeddingVector query_vec;
    if (method == RetrievalMethod::B_bienc_ce) {
        query_vec = providers.bi_encoder->embed({query}).front();
    }
    for (std::size_t i = 0; i < corpus.paragraphs.size(); ++i) {
        double s = 0.0;
        if (method == RetrievalMethod::A_bm25_ce) {
            s = brute_force_bm25(corpus.tokens, query_terms, i);
        } else {
            auto v = providers.bi_encoder->embed({corpus.paragraphs[i].body}).front();
            try {
                s = cosine_similarity(query_vec, v);
            } catch (const ValidationError&) {
                s = 0.0;
            }
        }
        all.push_back({corpus.paragraphs[i].para_id, s});
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.score > b.score || (a.score == b.score && a.para_id < b.para_id);
    });
    all.resize(std::min(k, all.size()));
    auto reranked = all;
    for (auto& e : reranked) {
        const auto& body = std::find_if(corpus.paragraphs.begin(), corpus.paragraphs.end(),
                                        [&](const Paragraph& p) { return p.para_id == e.para_id; })
                               ->body;
        e.score = providers.cross_encoder->score(query, body);
    }
    std::stable_sort(reranked.begin(), reranked.end(), [](const auto& a, const auto& b) {
        return a.score > b.score || (a.score == b.score && a.para_id < b.para_id);
    });
    return {all, reranked};
}

bool same_ranking(const std::vector<RankingEntry>& got, const std::vector<RankingEntry>& expected)
{
    if (got.size() != expected.size()) {
        return false;
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i].para_id != expected[i].para_id || !close_relative(got[i].score, expected[i].score)) {
            return false;
        }
    }
    return true;
}

class StubEncoderServer {
  public:
    StubEncoderServer()
    {
        m_server.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
            ++m_calls;
            auto body = json::parse(req.body);
            json vectors = json::array();
            for (const auto& text : body["texts"]) {
                const auto n = static_cast<double>(text.get<std::string>().size());
                vectors.push_back({n, 1.0, 0.0});
            }
            res.set_content(json{{"dim", 3}, {"vectors", vectors}}.dump(), "application/json");
        });
        m_server.Post("/cross", [this](const httplib::Request& req, httplib::Response& res) {
            ++m_calls;
            m_auth = req.get_header_value("Authorization");
            auto body = json::parse(req.body);
            json scores = json::array();
            for (const auto& pair : body["pairs"]) {
                const auto passage = pair[1].get<std::string>();
                scores.push_back(passage == "too high" ? 1.7 : passage == "too low" ? -0.2 : 0.5);
            }
            res.set_content(json{{"scores", scores}}.dump(), "application/json");
        });
        m_server.Post("/broken/cross", [this](const httplib::Request&, httplib::Response& res) {
            ++m_calls;
            res.status = 500;
        });
        m_server.Post("/garbled/embed", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"dim": 3, "vectors": "nope"})", "application/json");
        });
        m_port = m_server.bind_to_any_port("127.0.0.1");
        m_thread = std::thread([this] { m_server.listen_after_bind(); });
        m_server.wait_until_ready();
    }

    ~StubEncoderServer()
    {
        m_server.stop();
        m_thread.join();
    }

    HttpEndpoint endpoint(const std::string& prefix = "") const
    {
        HttpEndpoint e;
        e.base_url = "http://127.0.0.1:" + std::to_string(m_port) + prefix;
        e.token = "secret";
        e.timeout = std::chrono::milliseconds(2000);
        e.max_retries = 2;
        e.initial_backoff = std::chrono::milliseconds(1);
        return e;
    }

    int calls() const { return m_calls.load(); }
    const std::string& auth() const { return m_auth; }

  private:
    httplib::Server m_server;
    int m_port = 0;
    std::thread m_thread;
    std::atomic<int> m_calls{0};
    std::string m_auth;
};

}  // namespace

TEST_SUITE("retrieval")
{
    TEST_CASE("bm25 statistics on a hand-sized corpus")
    {
        std::vector<Paragraph> paras = {paragraph("a", "claim claim premium"), paragraph("b", "premium payment"),
                                        paragraph("c", "unrelated words here now")};
        auto index = LexicalIndex::build(paras);
        CHECK(index.size() == 3);
        CHECK(index.df("claim") == 1);
        CHECK(index.df("premium") == 2);
        CHECK(index.tf("claim", "a") == 2);
        CHECK(index.doc_length("c") == 4);
        CHECK(index.avg_doc_length() == doctest::Approx(3.0));
        CHECK(index.idf("claim") == doctest::Approx(std::log(1.0 + 2.5 / 1.5)));
        CHECK(index.idf("premium") > 0.0);
        CHECK(index.idf("missing") == doctest::Approx(std::log(1.0 + 3.5 / 0.5)));

        // Hand computation for "claim" in a: idf * tf(k1+1) / (tf + k1(1 - b + b*len/avg)).
        const double idf = std::log(1.0 + 2.5 / 1.5);
        const double expected = idf * 2 * 2.2 / (2 + 1.2);
        CHECK(index.score("claim", "a") == doctest::Approx(expected).epsilon(1e-12));
        // Repeated query terms count once.
        CHECK(index.score("claim claim CLAIM", "a") == doctest::Approx(expected).epsilon(1e-12));
        CHECK(index.score("claim", "b") == 0.0);
        CHECK_THROWS_AS(index.score("claim", "zz"), NotFoundError);

        CHECK_THROWS_AS(LexicalIndex::build(std::vector<Paragraph>{}), ValidationError);
        CHECK_THROWS_AS(LexicalIndex::build(std::vector<Paragraph>{paras[0], paras[0]}), ValidationError);
        CHECK_THROWS_AS(LexicalIndex::build(paras, Bm25Params{-1.0, 0.75}), ValidationError);
        CHECK_THROWS_AS(LexicalIndex::build(paras, Bm25Params{1.2, 1.5}), ValidationError);
    }

    TEST_CASE("bm25 matches a brute-force oracle on 1000 random corpora")
    {
        Rng rng(1234);
        std::size_t corpora = 0;
        std::size_t score_mismatches = 0;
        std::size_t ranking_mismatches = 0;
        std::size_t scores_checked = 0;
        for (int c = 0; c < 1000; ++c) {
            auto corpus = random_corpus(rng);
            auto index = LexicalIndex::build(corpus.paragraphs);
            std::vector<std::string> ids;
            for (const auto& p : corpus.paragraphs) {
                ids.push_back(p.para_id);
            }
            ++corpora;
            for (int q = 0; q < 5; ++q) {
                auto query = random_query(rng, corpus);
                const auto text = join_words(query);
                auto scores = index.score_all(text);
                std::vector<RankingEntry> entries;
                for (std::size_t d = 0; d < corpus.paragraphs.size(); ++d) {
                    const double expected = brute_force_bm25(corpus.tokens, query, d);
                    ++scores_checked;
                    if (!close_relative(scores[d], expected) || !close_relative(index.score(text, ids[d]), expected)) {
                        ++score_mismatches;
                    }
                    entries.push_back({ids[d], scores[d]});
                }
                sort_entries(entries);
                auto oracle = brute_force_ranking(corpus.tokens, ids, query);
                for (std::size_t r = 0; r < entries.size(); ++r) {
                    if (entries[r].para_id != ids[oracle[r]]) {
                        ++ranking_mismatches;
                        break;
                    }
                }
            }
        }
        CHECK(corpora == 1000);
        CHECK(scores_checked > 50000);
        CHECK(score_mismatches == 0);
        CHECK(ranking_mismatches == 0);
    }

    TEST_CASE("scores are non-negative and ties break by paragraph id")
    {
        std::vector<Paragraph> paras = {paragraph("p3", "alpha beta"), paragraph("p1", "alpha beta"),
                                        paragraph("p2", "gamma")};
        auto index = LexicalIndex::build(paras);
        std::vector<RankingEntry> entries;
        auto scores = index.score_all("alpha");
        for (std::size_t i = 0; i < paras.size(); ++i) {
            CHECK(scores[i] >= 0.0);
            entries.push_back({paras[i].para_id, scores[i]});
        }
        sort_entries(entries);
        CHECK(entries[0].para_id == "p1");
        CHECK(entries[1].para_id == "p3");
        CHECK(entries[2].para_id == "p2");
        for (double s : index.score_all("nothing matches")) {
            CHECK(s == 0.0);
        }
    }

    TEST_CASE("hashed embedder and cosine similarity")
    {
        std::vector<Paragraph> paras = {paragraph("a", "claim premium"), paragraph("b", "payout transfer")};
        auto index = std::make_shared<const LexicalIndex>(LexicalIndex::build(paras));
        HashedTfIdfEmbedder embedder(index, 64);
        auto v = embedder.embed({"claim premium", "claim premium claim premium", "premium", "-- !!"});
        CHECK(v[0].dim() == 64);
        CHECK(v[0].provider_tag == "hashed-tfidf-64");
        double norm = 0.0;
        for (double x : v[0].values) {
            norm += x * x;
        }
        CHECK(norm == doctest::Approx(1.0));
        CHECK(v[0] == v[1]);
        CHECK(cosine_similarity(v[0], v[1]) == doctest::Approx(1.0));
        CHECK(cosine_similarity(v[0], v[2]) < 1.0);
        CHECK_THROWS_WITH_AS(cosine_similarity(v[0], v[3]), "degenerate embedding", ValidationError);

        HashedTfIdfEmbedder other(index, 32);
        auto w = other.embed({"claim"});
        CHECK_THROWS_AS(cosine_similarity(v[0], w[0]), ValidationError);
        auto relabelled = v[2];
        relabelled.provider_tag = "elsewhere";
        CHECK_THROWS_AS(cosine_similarity(v[0], relabelled), ValidationError);

        CHECK_THROWS_AS(embedder.embed({}), ValidationError);
        CHECK_THROWS_AS(embedder.embed({""}), ValidationError);
        CHECK_THROWS_AS(HashedTfIdfEmbedder(index, 0), ValidationError);
    }

    TEST_CASE("fallback cross-encoder stays in the unit interval")
    {
        std::vector<Paragraph> paras = {paragraph("a", "claim premium"), paragraph("b", "payout transfer")};
        auto index = std::make_shared<const LexicalIndex>(LexicalIndex::build(paras));
        auto providers = fallback_providers(index, 128);
        CHECK(providers.cross_encoder->score("claim premium", "claim premium") == doctest::Approx(1.0));
        CHECK(providers.cross_encoder->score("claim", "-- !!") == 0.5);
        auto scores = providers.cross_encoder->score(std::vector<TextPair>{{"claim", "payout"}, {"claim", "claim"}});
        for (double s : scores) {
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
        }
        CHECK(providers.cross_encoder->score(std::vector<TextPair>{}).empty());
        CHECK_THROWS_AS(providers.cross_encoder->score("", "x"), ValidationError);
    }

    TEST_CASE("two-stage pipeline equals the exhaustive oracle on small sets")
    {
        Rng rng(99);
        std::size_t runs = 0;
        std::size_t mismatches = 0;
        for (int c = 0; c < 150; ++c) {
            auto corpus = random_corpus(rng, 50, 20);
            StudySet set{"r", corpus.paragraphs, {}};
            auto index = std::make_shared<const LexicalIndex>(LexicalIndex::build(set.paragraphs));
            auto providers = fallback_providers(index, 64);
            std::vector<std::vector<std::string>> queries;
            for (int q = 0; q < 3; ++q) {
                auto words = random_query(rng, corpus);
                // The hashed embedder cannot embed a text without tokens; random queries always have some.
                queries.push_back(words);
            }
            auto model = query_model(join_words(queries[0]), join_words(queries[1]), join_words(queries[2]));
            Retriever retriever(set, index, providers);
            const std::vector<std::string> nodes = {"P", "S", "T"};
            for (auto method : {RetrievalMethod::A_bm25_ce, RetrievalMethod::B_bienc_ce}) {
                PipelineConfig config;
                config.method = method;
                config.initial_k = rng.between(1, corpus.paragraphs.size());
                auto results = retriever.run_many(model, nodes, config, 2);
                for (std::size_t n = 0; n < nodes.size(); ++n) {
                    ++runs;
                    auto [initial, reranked] =
                        exhaustive_pipeline(corpus, join_words(queries[n]), queries[n], method, config.initial_k, providers);
                    const auto& got = results[n];
                    bool ok = same_ranking(got.initial.entries, initial) && same_ranking(got.reranked.entries, reranked);
                    // Re-ranking only reorders the initial candidates.
                    std::set<std::string> a;
                    std::set<std::string> b;
                    for (const auto& e : got.initial.entries) {
                        a.insert(e.para_id);
                    }
                    for (const auto& e : got.reranked.entries) {
                        b.insert(e.para_id);
                    }
                    ok = ok && a == b && got.initial.stage == RankingStage::initial &&
                         got.reranked.stage == RankingStage::reranked && got.reranked.query_node_id == nodes[n];
                    mismatches += ok ? 0 : 1;
                }
            }
        }
        CHECK(runs == 900);
        CHECK(mismatches == 0);
    }

    TEST_CASE("pipeline clamps oversized k and validates its configuration")
    {
        std::vector<Paragraph> paras = {paragraph("a", "claim premium"), paragraph("b", "payout transfer")};
        StudySet set{"x", paras, {}};
        auto index = std::make_shared<const LexicalIndex>(LexicalIndex::build(paras));
        Retriever retriever(set, index, fallback_providers(index));
        auto model = query_model("claim", "payout", "premium");
        PipelineConfig config;
        config.initial_k = 10;
        auto run = retriever.run(model, "P", config);
        CHECK(run.initial.entries.size() == 2);
        REQUIRE(run.warnings.size() == 1);
        CHECK(run.warnings[0].find("clamped") != std::string::npos);

        config.final_k = 20;
        CHECK_THROWS_AS(retriever.run(model, "P", config), ValidationError);
        config = {};
        config.initial_k = 0;
        CHECK_THROWS_AS(config.validate(), ValidationError);
        CHECK_THROWS_AS(retriever.run(model, "nope", PipelineConfig{}), NotFoundError);
        CHECK(retrieval_method_from_string("B") == RetrievalMethod::B_bienc_ce);
        CHECK_THROWS_AS(retrieval_method_from_string("C"), ValidationError);
    }

    TEST_CASE("ranking files are byte-identical across runs")
    {
        auto uc = make_use_case(insurance_shape());
        auto set = study_set_of(uc);
        auto model = model_of(uc);
        std::vector<std::string> nodes;
        for (const auto& node : model.nodes) {
            nodes.push_back(node.node_id);
        }
        std::vector<std::string> outputs;
        for (int i = 0; i < 3; ++i) {
            auto index = std::make_shared<const LexicalIndex>(LexicalIndex::build(set.paragraphs));
            Retriever retriever(set, index, fallback_providers(index));
            std::vector<json> lines;
            for (auto method : {RetrievalMethod::A_bm25_ce, RetrievalMethod::B_bienc_ce}) {
                PipelineConfig config;
                config.method = method;
                for (const auto& run : retriever.run_many(model, nodes, config, 1 + i * 3)) {
                    lines.push_back(to_json(run.initial));
                    lines.push_back(to_json(run.reranked));
                }
            }
            outputs.push_back(to_jsonl(lines));
        }
        CHECK(outputs[0].size() > 1000);
        CHECK(outputs[0] == outputs[1]);
        CHECK(outputs[1] == outputs[2]);

        auto parsed = ranking_from_json(json::parse(outputs[0].substr(0, outputs[0].find('\n'))));
        CHECK(parsed.query_node_id == nodes[0]);
        CHECK(parsed.entries.size() == 100);
    }

    TEST_CASE("binarization and selections")
    {
        Ranking ranking{"T", RetrievalMethod::A_bm25_ce, RankingStage::reranked,
                        {{"b", 0.5}, {"a", 0.5}, {"c", 0.9}}};
        CHECK(binarize_top_k(ranking, 2) == std::vector<std::string>{"c", "a"});
        std::vector<std::string> warnings;
        CHECK(binarize_top_k(ranking, 5, &warnings).size() == 3);
        CHECK(warnings.size() == 1);

        auto model = small_model();
        StudySet set{"x", {paragraph("a", "x"), paragraph("b", "y"), paragraph("c", "z")}, {}};
        auto preds = selections_to_predictions(set, model, {{"T1", {"a"}}, {"S2", {"b"}}, {"P", {"c"}}});
        CHECK(preds.at("a").level3.at("T1") == RelevanceType::informative);
        CHECK(preds.at("a").level2.at("S1") == RelevanceType::informative);
        CHECK(preds.at("a").level1 == RelevanceType::informative);
        CHECK(preds.at("b").level2.at("S2") == RelevanceType::informative);
        CHECK(preds.at("b").level1 == RelevanceType::informative);
        CHECK(preds.at("c").level1 == RelevanceType::informative);
        CHECK(preds.at("c").level2.empty());
        CHECK_THROWS_AS(selections_to_predictions(set, model, {{"T1", {"zz"}}}), NotFoundError);

        GoldStandard gold;
        gold.labels["a"] = {LabelSet{RelevanceType::compliance, {{"S1", RelevanceType::compliance}},
                                     {{"T1", RelevanceType::compliance}}},
                            {}};
        gold.labels["b"] = {LabelSet{}, {}};
        CHECK(gold_relevant_count(gold, model, "P") == 1);
        CHECK(gold_relevant_count(gold, model, "S1") == 1);
        CHECK(gold_relevant_count(gold, model, "T2") == 0);
    }

    TEST_CASE("remote providers speak the encoder protocol")
    {
        StubEncoderServer server;
        RemoteEmbeddingProvider embedder(server.endpoint(), 2);
        auto vectors = embedder.embed({"a", "bb", "ccc"});
        CHECK(server.calls() == 2);
        CHECK(vectors.size() == 3);
        CHECK(vectors[2].values == std::vector<double>{3.0, 1.0, 0.0});
        CHECK(vectors[0].provider_tag == embedder.tag());

        RemoteCrossEncoder cross(server.endpoint());
        auto scores = cross.score(std::vector<TextPair>{{"q", "too high"}, {"q", "too low"}, {"q", "fine"}});
        CHECK(scores == std::vector<double>{1.0, 0.0, 0.5});
        CHECK(server.auth() == "Bearer secret");

        RemoteCrossEncoder broken(server.endpoint("/broken"));
        const int before = server.calls();
        try {
            broken.score("q", "p");
            FAIL("expected a transport error");
        } catch (const TransportError& e) {
            CHECK(e.retries() == 2);
        }
        CHECK(server.calls() - before == 3);

        RemoteEmbeddingProvider garbled(server.endpoint("/garbled"));
        CHECK_THROWS_AS(garbled.embed({"x"}), ParseError);

        auto endpoint = server.endpoint();
        endpoint.base_url = "http://127.0.0.1:1";
        endpoint.max_retries = 0;
        CHECK_THROWS_AS(RemoteCrossEncoder(endpoint).score("q", "p"), TransportError);
    }
}
