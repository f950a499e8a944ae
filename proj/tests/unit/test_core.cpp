#include <doctest.h>

#include "fixtures.hpp"
#include "regrel/error.hpp"
#include "regrel/json_io.hpp"
#include "regrel/parallel.hpp"
#include "regrel/relevance.hpp"
#include "regrel/text.hpp"

using namespace regrel;

TEST_SUITE("core")
{
    TEST_CASE("tokenizer splits on non-alphanumerics and lowercases")
    {
        CHECK(tokenize("Claims, PREMIUM-rate 2024!") == std::vector<std::string>{"claims", "premium", "rate", "2024"});
        CHECK(tokenize("Größe Über") == std::vector<std::string>{"größe", "über"});
        CHECK(tokenize("   ").empty());
        CHECK(tokenize("a\xff" "b") == std::vector<std::string>{"a", "b"});

        TokenizerOptions keep_case;
        keep_case.lowercase = false;
        CHECK(tokenize("Claim", keep_case) == std::vector<std::string>{"Claim"});

        TokenizerOptions stop;
        stop.stopwords = {"the"};
        CHECK(tokenize("The claim", stop) == std::vector<std::string>{"claim"});
    }

    TEST_CASE("fnv1a64 matches the reference vectors")
    {
        CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
        CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
        CHECK(hex_digest("a") == "af63dc4c8601ec8c");
    }

    TEST_CASE("word counting and whitespace normalization")
    {
        CHECK(word_count("one  two\tthree\n") == 3);
        CHECK(word_count("") == 0);
        CHECK(normalize_whitespace("  a \n b  ") == "a b");
    }

    TEST_CASE("relevance enums round-trip")
    {
        for (auto t : {RelevanceType::irrelevant, RelevanceType::informative, RelevanceType::compliance}) {
            CHECK(relevance_from_string(to_string(t)) == t);
        }
        CHECK_THROWS_AS(relevance_from_string("maybe"), ValidationError);
        CHECK(level_from_int(2) == Level::subprocess);
        CHECK_THROWS_AS(level_from_int(4), ValidationError);
        CHECK(stronger(RelevanceType::informative, RelevanceType::compliance) == RelevanceType::compliance);
        CHECK(stronger(RelevanceType::irrelevant, RelevanceType::informative) == RelevanceType::informative);
    }

    TEST_CASE("label sets serialize and parse")
    {
        LabelSet labels;
        labels.level1 = RelevanceType::compliance;
        labels.level2["S1"] = RelevanceType::compliance;
        labels.level3["T1"] = RelevanceType::informative;
        CHECK(label_set_from_json(to_json(labels)) == labels);
        CHECK(labels.at(Level::task, "T9") == RelevanceType::irrelevant);
        CHECK(labels.any_relevant(Level::subprocess));
        CHECK_THROWS_AS(label_set_from_json(json{{"level2", json::object()}}), ValidationError);
        CHECK_THROWS_AS(label_set_from_json(json{{"level1", "informative"}, {"level2", {{"S1", 3}}}}),
                        ValidationError);
    }

    TEST_CASE("jsonl parsing reports the failing line")
    {
        auto records = parse_jsonl("{\"a\":1}\n\n{\"a\":2}\n", "mem");
        CHECK(records.size() == 2);
        try {
            parse_jsonl("{\"a\":1}\n{broken\n", "mem");
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("mem:2") != std::string::npos);
            CHECK(e.raw() == "{broken");
        }
        CHECK(to_jsonl(records) == "{\"a\":1}\n{\"a\":2}\n");
    }

    TEST_CASE("atomic file writes replace content")
    {
        testing::TempDir dir;
        auto path = dir / "out.txt";
        write_text_file_atomic(path, "first");
        write_text_file_atomic(path, "second");
        CHECK(read_text_file(path) == "second");
        CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), Error);
    }

    TEST_CASE("parallel_for visits every index once and rethrows")
    {
        std::vector<std::atomic<int>> hits(200);
        parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i].fetch_add(1); });
        for (auto& h : hits) {
            CHECK(h.load() == 1);
        }
        CHECK_THROWS_AS(parallel_for(50, 3,
                                     [](std::size_t i) {
                                         if (i == 17) {
                                             throw ValidationError("boom");
                                         }
                                     }),
                        ValidationError);
    }
}
