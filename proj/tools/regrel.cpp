#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "regrel/corpus.hpp"
#include "regrel/crowd.hpp"
#include "regrel/error.hpp"
#include "regrel/evaluation.hpp"
#include "regrel/json_io.hpp"
#include "regrel/llm.hpp"
#include "regrel/process.hpp"
#include "regrel/retrieval.hpp"
#include "regrel/server.hpp"
#include "regrel/store.hpp"

namespace fs = std::filesystem;
using namespace regrel;

namespace {

std::vector<DocumentSource> read_sources(const fs::path& in)
{
    std::vector<fs::path> files;
    if (fs::is_directory(in)) {
        for (const auto& entry : fs::directory_iterator(in)) {
            if (entry.is_regular_file()) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(in);
    }
    std::vector<DocumentSource> sources;
    for (const auto& file : files) {
        sources.push_back({file.filename().string(), read_text_file(file)});
    }
    return sources;
}

StudySet read_study_set(const fs::path& path, const std::string& use_case)
{
    return load_study_set(use_case.empty() ? path.stem().string() : use_case, read_jsonl_file(path));
}

std::map<std::string, RegulatoryDocument> read_documents(const std::optional<fs::path>& path)
{
    std::map<std::string, RegulatoryDocument> out;
    if (path) {
        for (auto& doc : load_documents(read_jsonl_file(*path))) {
            out.emplace(doc.doc_id, std::move(doc));
        }
    }
    return out;
}

void write_output(const std::optional<fs::path>& out, const std::string& content)
{
    if (out) {
        write_text_file_atomic(*out, content);
    } else {
        std::cout << content;
    }
}

std::pair<std::string, int> split_listen(const std::string& listen)
{
    auto colon = listen.rfind(':');
    if (colon == std::string::npos) {
        return {"127.0.0.1", std::stoi(listen)};
    }
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
}

std::shared_ptr<const ChatProvider> chat_from_env()
{
    if (std::getenv("REGREL_CHAT_URL") == nullptr) {
        return nullptr;
    }
    return std::make_shared<RemoteChatProvider>(endpoint_from_env("REGREL_CHAT"));
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Relevance of regulatory text for business processes"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Build a corpus from regulatory sources");
    fs::path ingest_in, ingest_out;
    std::string ingest_format = "jsonl";
    std::optional<fs::path> ingest_docs;
    ingest->add_option("--in", ingest_in, "Source file or directory")->required();
    ingest->add_option("--format", ingest_format)->check(CLI::IsMember({"jsonl", "plaintext"}));
    ingest->add_option("--documents", ingest_docs, "documents.jsonl to check references against");
    ingest->add_option("--out", ingest_out, "corpus.jsonl")->required();

    // validate-set
    auto* validate_set = app.add_subcommand("validate-set", "Check a study set against an expected composition");
    fs::path vs_set, vs_expect;
    std::optional<fs::path> vs_corpus;
    validate_set->add_option("--set", vs_set)->required();
    validate_set->add_option("--expect", vs_expect)->required();
    validate_set->add_option("--corpus", vs_corpus);

    // process
    auto* process = app.add_subcommand("process", "Process model utilities");
    process->require_subcommand(1);
    auto* process_validate = process->add_subcommand("validate", "Validate process.json");
    fs::path pv_in;
    process_validate->add_option("--in", pv_in)->required();
    auto* process_bpmn = process->add_subcommand("from-bpmn", "Extract a skeleton from BPMN 2.0 XML");
    fs::path pb_in;
    std::optional<fs::path> pb_out;
    process_bpmn->add_option("--in", pb_in)->required();
    process_bpmn->add_option("--out", pb_out);

    // rank
    auto* rank = app.add_subcommand("rank", "Two-stage retrieval per process node");
    fs::path rk_set, rk_process;
    std::optional<fs::path> rk_out, rk_gold, rk_pred_out;
    std::string rk_method = "A", rk_provider = "fallback", rk_use_case, rk_verbosity = "description_only";
    int rk_level = 1;
    std::size_t rk_initial_k = 100, rk_in_flight = 4;
    std::optional<std::size_t> rk_final_k;
    rank->add_option("--set", rk_set)->required();
    rank->add_option("--process", rk_process)->required();
    rank->add_option("--method", rk_method)->check(CLI::IsMember({"A", "B", "A_bm25_ce", "B_bienc_ce"}));
    rank->add_option("--level", rk_level)->check(CLI::Range(1, 3));
    rank->add_option("--provider", rk_provider)->check(CLI::IsMember({"fallback", "remote"}));
    rank->add_option("--initial-k", rk_initial_k);
    rank->add_option("--final-k", rk_final_k);
    rank->add_option("--verbosity", rk_verbosity)->check(CLI::IsMember({"description_only", "with_ancestors"}));
    rank->add_option("--in-flight", rk_in_flight);
    rank->add_option("--use-case", rk_use_case);
    rank->add_option("--out", rk_out, "ranking.jsonl");
    rank->add_option("--gold", rk_gold, "Gold for equal-count binarization");
    rank->add_option("--predictions-out", rk_pred_out, "Binarized predictions.jsonl");

    // judge
    auto* judge_cmd = app.add_subcommand("judge", "Zero-shot judging through a chat provider");
    fs::path jd_set, jd_process;
    std::optional<fs::path> jd_out, jd_docs, jd_pred_out;
    std::string jd_iteration = "v3", jd_closure = "lenient", jd_use_case;
    std::optional<std::size_t> jd_filter;
    std::size_t jd_in_flight = 4;
    judge_cmd->add_option("--set", jd_set)->required();
    judge_cmd->add_option("--process", jd_process)->required();
    judge_cmd->add_option("--iteration", jd_iteration)->check(CLI::IsMember({"v1", "v2", "v3"}));
    judge_cmd->add_option("--documents", jd_docs);
    judge_cmd->add_option("--closure", jd_closure)->check(CLI::IsMember({"strict", "lenient"}));
    judge_cmd->add_option("--post-filter-subprocess-threshold", jd_filter);
    judge_cmd->add_option("--in-flight", jd_in_flight);
    judge_cmd->add_option("--use-case", jd_use_case);
    judge_cmd->add_option("--out", jd_out, "judgments.jsonl");
    judge_cmd->add_option("--predictions-out", jd_pred_out);

    // crowd aggregate
    auto* crowd = app.add_subcommand("crowd", "Crowd annotation utilities");
    crowd->require_subcommand(1);
    auto* crowd_agg = crowd->add_subcommand("aggregate", "Aggregate worker submissions");
    fs::path ca_in, ca_process;
    std::optional<fs::path> ca_out;
    std::string ca_strategy = "qlt_comb", ca_vote = "majority";
    double ca_threshold = 0.5;
    std::size_t ca_workers = 3;
    crowd_agg->add_option("--in", ca_in)->required();
    crowd_agg->add_option("--process", ca_process)->required();
    crowd_agg->add_option("--strategy", ca_strategy)->check(CLI::IsMember({"unfiltered", "qlt_filter", "qlt_comb"}));
    crowd_agg->add_option("--vote-rule", ca_vote)->check(CLI::IsMember({"majority", "proportion"}));
    crowd_agg->add_option("--proportion-threshold", ca_threshold);
    crowd_agg->add_option("--target-workers", ca_workers);
    crowd_agg->add_option("--out", ca_out);

    // eval
    auto* eval = app.add_subcommand("eval", "Score predictions against gold");
    fs::path ev_gold, ev_pred, ev_process;
    std::optional<fs::path> ev_set, ev_out;
    eval->add_option("--gold", ev_gold)->required();
    eval->add_option("--pred", ev_pred)->required();
    eval->add_option("--process", ev_process)->required();
    eval->add_option("--set", ev_set, "Study set for group accuracy and group checks");
    eval->add_option("--out", ev_out, "report.json");

    // recommend
    auto* recommend = app.add_subcommand("recommend", "Suggest a method combination for a scenario");
    std::string rc_usage, rc_impact, rc_dynamics, rc_input;
    recommend->add_option("--usage", rc_usage)->required();
    recommend->add_option("--impact", rc_impact)->required();
    recommend->add_option("--dynamics", rc_dynamics)->required();
    recommend->add_option("--reg-input", rc_input)->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the review service");
    fs::path sv_store;
    std::string sv_listen = "127.0.0.1:8080", sv_provider = "fallback";
    std::optional<fs::path> sv_static;
    serve->add_option("--store", sv_store)->required();
    serve->add_option("--listen", sv_listen);
    serve->add_option("--provider", sv_provider)->check(CLI::IsMember({"fallback", "remote"}));
    serve->add_option("--static", sv_static, "Directory with the review UI bundle");

    // store
    auto* store_cmd = app.add_subcommand("store", "Store maintenance");
    store_cmd->require_subcommand(1);
    auto* store_import = store_cmd->add_subcommand("import", "Load inputs into a store");
    fs::path si_store;
    std::optional<fs::path> si_set, si_process, si_docs, si_gold;
    std::string si_use_case, si_model;
    store_import->add_option("--store", si_store)->required();
    store_import->add_option("--set", si_set);
    store_import->add_option("--use-case", si_use_case);
    store_import->add_option("--process", si_process);
    store_import->add_option("--documents", si_docs);
    store_import->add_option("--gold", si_gold);
    store_import->add_option("--model", si_model, "Process model the gold belongs to");
    auto* store_checkpoint = store_cmd->add_subcommand("checkpoint", "Write a snapshot");
    fs::path sc_store;
    store_checkpoint->add_option("--store", sc_store)->required();
    auto* store_export = store_cmd->add_subcommand("export-gold", "Export the gold standard of a model");
    fs::path se_store;
    std::string se_model;
    std::optional<fs::path> se_out;
    store_export->add_option("--store", se_store)->required();
    store_export->add_option("--model", se_model)->required();
    store_export->add_option("--out", se_out);

    // review
    auto* review = app.add_subcommand("review", "Review queue");
    review->require_subcommand(1);
    auto* review_enqueue = review->add_subcommand("enqueue", "Queue a finished run for expert review");
    fs::path re_store;
    std::string re_run;
    std::size_t re_top_k = 10;
    bool re_any = false;
    review_enqueue->add_option("--store", re_store)->required();
    review_enqueue->add_option("--run", re_run)->required();
    review_enqueue->add_option("--top-k", re_top_k);
    review_enqueue->add_flag("--any-label", re_any, "Also queue pairs judged irrelevant");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        if (*ingest) {
            std::vector<RegulatoryDocument> docs;
            if (ingest_docs) {
                docs = load_documents(read_jsonl_file(*ingest_docs));
            }
            auto sources = read_sources(ingest_in);
            auto result = ingest_documents(sources, source_format_from_string(ingest_format), docs);
            write_text_file_atomic(ingest_out, export_corpus_jsonl(result.corpus));
            std::cout << "accepted " << result.report.accepted << " paragraphs\n";
            for (const auto& flag : result.report.skipped) {
                std::cout << "skipped " << flag.fragment << ": " << flag.reason << '\n';
            }
            return 0;
        }
        if (*validate_set) {
            auto set = read_study_set(vs_set, "");
            std::optional<Corpus> corpus;
            if (vs_corpus) {
                std::vector<DocumentSource> sources{{vs_corpus->filename().string(), read_text_file(*vs_corpus)}};
                corpus = ingest_documents(sources, SourceFormat::jsonl).corpus;
            }
            auto report = validate_study_set(set, expected_composition_from_json(read_json_file(vs_expect)),
                                             corpus ? &*corpus : nullptr);
            std::cout << to_json(report).dump(2) << '\n';
            return report.passed() ? 0 : 1;
        }
        if (*process_validate) {
            auto model = load_process(read_json_file(pv_in));
            std::cout << "ok: " << model.model_id << " (" << model.count(Level::process) << '/'
                      << model.count(Level::subprocess) << '/' << model.count(Level::task) << " nodes)\n";
            return 0;
        }
        if (*process_bpmn) {
            auto model = extract_bpmn_skeleton(read_text_file(pb_in));
            write_output(pb_out, to_json(model).dump(2) + "\n");
            return 0;
        }
        if (*rank) {
            auto set = read_study_set(rk_set, rk_use_case);
            auto model = load_process(read_json_file(rk_process));
            auto index = std::make_shared<const LexicalIndex>(LexicalIndex::build(set.paragraphs));
            auto providers = rk_provider == "remote" ? remote_providers_from_env() : fallback_providers(index);
            PipelineConfig config;
            config.method = retrieval_method_from_string(rk_method);
            config.initial_k = rk_initial_k;
            config.final_k = rk_final_k;
            config.verbosity = query_verbosity_from_string(rk_verbosity);
            config.validate();

            std::vector<std::string> node_ids;
            for (const auto* node : model.at_level(level_from_int(rk_level))) {
                node_ids.push_back(node->node_id);
            }
            Retriever retriever(set, index, providers);
            auto runs = retriever.run_many(model, node_ids, config, rk_in_flight);
            std::vector<json> lines;
            for (const auto& run : runs) {
                lines.push_back(to_json(run.reranked));
                for (const auto& w : run.warnings) {
                    spdlog::warn("{}: {}", run.reranked.query_node_id, w);
                }
            }
            write_output(rk_out, to_jsonl(lines));

            if (rk_pred_out) {
                std::optional<GoldStandard> gold;
                if (rk_gold) {
                    gold = load_gold(set.use_case_id, read_jsonl_file(*rk_gold), model);
                } else if (!rk_final_k) {
                    throw ValidationError("--predictions-out needs --gold or --final-k");
                }
                std::vector<std::pair<std::string, std::vector<std::string>>> selected;
                for (const auto& run : runs) {
                    auto k = rk_final_k ? *rk_final_k
                                        : gold_relevant_count(*gold, model, run.reranked.query_node_id);
                    selected.emplace_back(run.reranked.query_node_id, binarize_top_k(run.reranked, k));
                }
                auto predictions = selections_to_predictions(set, model, selected);
                std::vector<json> records;
                for (const auto& [para_id, labels] : predictions) {
                    records.push_back(to_json(PredictionRecord{para_id, labels, std::string(to_string(config.method)),
                                                               hex_digest(json{{"initial_k", config.initial_k},
                                                                               {"level", rk_level},
                                                                               {"provider", rk_provider}}
                                                                              .dump())}));
                }
                write_text_file_atomic(*rk_pred_out, to_jsonl(records));
            }
            return 0;
        }
        if (*judge_cmd) {
            auto chat = chat_from_env();
            if (!chat) {
                throw ValidationError("judge needs a chat provider: set REGREL_CHAT_URL (and REGREL_CHAT_TOKEN)");
            }
            auto set = read_study_set(jd_set, jd_use_case);
            auto model = load_process(read_json_file(jd_process));
            JudgeConfig config;
            config.iteration = prompt_iteration_from_string(jd_iteration);
            config.closure = jd_closure == "strict" ? ClosureMode::strict : ClosureMode::lenient;
            config.in_flight = jd_in_flight;
            config.subprocess_post_filter = jd_filter;
            auto run = judge_study_set(*chat, set, model, read_documents(jd_docs), config);
            std::vector<json> lines;
            std::vector<json> predictions;
            const auto digest = config_digest(config);
            for (const auto& j : run.judgments) {
                lines.push_back(to_json(j));
                predictions.push_back(to_json(to_prediction(j, "llm_" + std::string(to_string(config.iteration)), digest)));
            }
            write_output(jd_out, to_jsonl(lines));
            if (jd_pred_out) {
                write_text_file_atomic(*jd_pred_out, to_jsonl(predictions));
            }
            for (const auto& f : run.failures) {
                std::cerr << f.para_id << ": " << f.kind << " failure: " << f.message << '\n';
            }
            return run.failures.empty() ? 0 : 1;
        }
        if (*crowd_agg) {
            auto model = load_process(read_json_file(ca_process));
            auto strategy = aggregation_strategy_from_string(ca_strategy);
            AggregateOptions options;
            options.vote_rule = ca_vote == "proportion" ? VoteRule::proportion : VoteRule::majority;
            options.proportion_threshold = ca_threshold;
            options.target_workers = ca_workers;
            auto aggregates = aggregate_all(load_submissions(read_jsonl_file(ca_in)), strategy, model, options);
            std::vector<json> lines;
            for (const auto& agg : aggregates) {
                lines.push_back(to_json(to_prediction(agg, strategy)));
                for (const auto& w : agg.warnings) {
                    spdlog::info("{}: {}", agg.para_id, w);
                }
            }
            write_output(ca_out, to_jsonl(lines));
            return 0;
        }
        if (*eval) {
            auto model = load_process(read_json_file(ev_process));
            std::optional<StudySet> set;
            std::map<std::string, Group> groups;
            if (ev_set) {
                set = read_study_set(*ev_set, "");
                groups = groups_of(*set);
            }
            auto gold = load_gold(set ? set->use_case_id : ev_gold.stem().string(), read_jsonl_file(ev_gold), model,
                                  set ? &groups : nullptr);
            auto loaded = load_predictions(read_jsonl_file(ev_pred));
            auto report = build_report(loaded.labels, gold, model, set ? &groups : nullptr, loaded.excluded);
            report.method = loaded.method;
            write_output(ev_out, to_json(report).dump(2) + "\n");
            return 0;
        }
        if (*recommend) {
            auto rec = recommend_methods({usage_from_string(rc_usage), intensity_from_string(rc_impact),
                                          intensity_from_string(rc_dynamics), intensity_from_string(rc_input)});
            std::cout << json{{"combination", to_string(rec.combination)},
                              {"canonical", rec.canonical},
                              {"row", rec.row}}
                             .dump()
                      << '\n';
            return 0;
        }
        if (*serve) {
            Store store(sv_store);
            ServiceProviders providers;
            if (sv_provider == "remote") {
                providers.retrieval = [](std::shared_ptr<const LexicalIndex>) { return remote_providers_from_env(); };
            }
            providers.chat = chat_from_env();

            sigset_t signals;
            sigemptyset(&signals);
            sigaddset(&signals, SIGINT);
            sigaddset(&signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);

            ReviewServer server(store, providers, sv_static);
            auto [host, port] = split_listen(sv_listen);
            int bound = server.bind(host, port);
            if (bound < 0) {
                throw ValidationError("cannot listen on " + sv_listen);
            }
            std::jthread waiter([&server, signals] {
                int sig = 0;
                sigwait(&signals, &sig);
                server.stop();
            });
            spdlog::set_level(spdlog::level::info);
            spdlog::info("serving {} on {}:{}", sv_store.string(), host, bound);
            server.serve();
            server.wait_for_jobs();
            store.checkpoint();
            waiter.detach();
            return 0;
        }
        if (*store_import) {
            Store store(si_store);
            if (si_docs) {
                store.put_documents(load_documents(read_jsonl_file(*si_docs)));
            }
            if (si_process) {
                store.put_process(load_process(read_json_file(*si_process)));
            }
            if (si_set) {
                store.put_study_set(read_study_set(*si_set, si_use_case));
            }
            if (si_gold) {
                if (si_model.empty()) {
                    throw ValidationError("--gold needs --model");
                }
                store.import_gold(si_model, read_jsonl_file(*si_gold));
            }
            std::cout << "store at version " << store.state()->version << '\n';
            return 0;
        }
        if (*store_checkpoint) {
            Store store(sc_store);
            std::cout << store.checkpoint().string() << '\n';
            return 0;
        }
        if (*store_export) {
            Store store(se_store);
            write_output(se_out, to_jsonl(gold_to_jsonl(store.export_gold(se_model))));
            return 0;
        }
        if (*review_enqueue) {
            Store store(re_store);
            auto created = store.enqueue_review(re_run, {re_top_k, !re_any});
            std::cout << "queued " << created.size() << " items\n";
            return 0;
        }
    } catch (const ConflictError& e) {
        std::cerr << "conflict: " << e.what() << '\n';
        return 3;
    } catch (const NotFoundError& e) {
        std::cerr << "not found: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
