#include <algorithm>
#include <mutex>
#include <thread>
#include <vector>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "regrel/error.hpp"
#include "regrel/json_io.hpp"
#include "regrel/server.hpp"

namespace regrel {

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message, json extra = json::object())
{
    extra["error"] = message;
    send_json(res, status, extra);
}

/// Runs a handler and maps library exceptions onto HTTP statuses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn)
{
    try {
        fn();
    } catch (const ConflictError& e) {
        json current;
        try {
            current = json::parse(e.current_state());
        } catch (const json::parse_error&) {
            current = e.current_state();
        }
        send_error(res, 409, e.what(), {{"current", current}});
    } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
    } catch (const ValidationError& e) {
        send_error(res, 400, e.what());
    } catch (const ParseError& e) {
        send_error(res, 400, e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed request: ") + e.what());
    } catch (const std::exception& e) {
        spdlog::error("request failed: {}", e.what());
        send_error(res, 500, e.what());
    }
}

json parse_body(const httplib::Request& req)
{
    if (req.body.empty()) {
        return json::object();
    }
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
    }
}

std::optional<std::string> query_param(const httplib::Request& req, const char* key)
{
    if (!req.has_param(key)) {
        return std::nullopt;
    }
    auto value = req.get_param_value(key);
    if (value.empty()) {
        return std::nullopt;
    }
    return value;
}

std::size_t size_param(const httplib::Request& req, const char* key, std::size_t fallback)
{
    auto text = query_param(req, key);
    if (!text) {
        return fallback;
    }
    try {
        return std::stoul(*text);
    } catch (const std::exception&) {
        throw ValidationError(std::string("query parameter ") + key + " must be a non-negative integer");
    }
}

json node_json(const ProcessNode& node)
{
    return json{{"node_id", node.node_id},
                {"level", static_cast<int>(node.level)},
                {"kind", to_string(node.kind)},
                {"name", node.name},
                {"description", node.description}};
}

/// Review item plus what an expert needs to judge it. The group tag is left out on purpose.
json enriched_item(const StoreState& state, const ReviewItem& item)
{
    auto j = to_json(item);
    if (auto run = state.runs.find(item.run_id); run != state.runs.end()) {
        if (auto set = state.sets.find(run->second.set_id); set != state.sets.end()) {
            if (const auto* para = set->second.find(item.para_id)) {
                json paragraph{{"para_id", para->para_id},
                               {"doc_id", para->doc_id},
                               {"section_title", para->section_title},
                               {"subsection", para->subsection ? json(*para->subsection) : json(nullptr)},
                               {"body", para->body}};
                if (auto doc = state.documents.find(para->doc_id); doc != state.documents.end()) {
                    paragraph["document"] = to_json(doc->second);
                }
                j["paragraph"] = paragraph;
            }
        }
    }
    if (auto model = state.processes.find(item.model_id); model != state.processes.end()) {
        if (const auto* node = model->second.find(item.query_node_id)) {
            auto n = node_json(*node);
            json ancestors = json::array();
            for (const auto* a : model->second.ancestors(node->node_id)) {
                ancestors.push_back(node_json(*a));
            }
            n["ancestors"] = ancestors;
            j["node"] = n;
        }
    }
    return j;
}

bool score_order(const ReviewItem* a, const ReviewItem* b)
{
    if (a->machine_score.has_value() != b->machine_score.has_value()) {
        return a->machine_score.has_value();
    }
    if (a->machine_score && *a->machine_score != *b->machine_score) {
        return *a->machine_score > *b->machine_score;
    }
    return a->item_id < b->item_id;
}

std::string resolve_model_id(const StoreState& state, const httplib::Request& req)
{
    if (auto id = query_param(req, "model_id")) {
        return *id;
    }
    if (state.processes.size() == 1) {
        return state.processes.begin()->first;
    }
    throw ValidationError("model_id query parameter is required");
}

}  // namespace

struct ReviewServer::Impl {
    Store& store;
    ServiceProviders providers;
    httplib::Server http;
    std::mutex jobs_mutex;
    std::vector<std::jthread> jobs;

    Impl(Store& s, ServiceProviders p) : store(s), providers(std::move(p)) {}

    void launch(std::function<void()> job)
    {
        std::lock_guard lock(jobs_mutex);
        jobs.emplace_back(std::move(job));
    }

    void wait()
    {
        std::vector<std::jthread> finished;
        {
            std::lock_guard lock(jobs_mutex);
            finished.swap(jobs);
        }
        // jthread joins on destruction.
    }

    void routes();
    void queue(const httplib::Request& req, httplib::Response& res);
    void decision(const httplib::Request& req, httplib::Response& res);
    void start_rank(const httplib::Request& req, httplib::Response& res);
    void start_judge(const httplib::Request& req, httplib::Response& res);
    void run_status(const httplib::Request& req, httplib::Response& res);
    void enqueue(const httplib::Request& req, httplib::Response& res);
};

void ReviewServer::Impl::queue(const httplib::Request& req, httplib::Response& res)
{
    const auto state = store.state();
    const auto status = query_param(req, "status").value_or("pending");
    const auto level = query_param(req, "level");
    const auto method = query_param(req, "method");
    const auto run_id = query_param(req, "run_id");
    const auto page_size = std::clamp<std::size_t>(size_param(req, "page_size", 20), 1, 500);
    const auto page = std::max<std::size_t>(size_param(req, "page", 1), 1);

    std::optional<Level> level_filter;
    if (level) {
        level_filter = level_from_string(*level);
    }
    std::optional<ReviewStatus> status_filter;
    if (status != "all") {
        status_filter = review_status_from_string(status);
    }

    std::vector<const ReviewItem*> selected;
    json by_level = json::object();
    std::size_t pending = 0;
    std::size_t decided = 0;
    for (const auto& [id, item] : state->items) {
        const bool is_pending = item.status == ReviewStatus::pending;
        auto& counts = by_level[std::to_string(static_cast<int>(item.level))];
        if (counts.is_null()) {
            counts = {{"pending", 0}, {"decided", 0}};
        }
        counts[is_pending ? "pending" : "decided"] = counts[is_pending ? "pending" : "decided"].get<int>() + 1;
        (is_pending ? pending : decided) += 1;

        if ((status_filter && item.status != *status_filter) || (level_filter && item.level != *level_filter) ||
            (method && item.method != *method) || (run_id && item.run_id != *run_id)) {
            continue;
        }
        selected.push_back(&item);
    }
    std::sort(selected.begin(), selected.end(), score_order);

    json items = json::array();
    const auto begin = std::min(selected.size(), (page - 1) * page_size);
    const auto end = std::min(selected.size(), begin + page_size);
    for (auto i = begin; i < end; ++i) {
        items.push_back(enriched_item(*state, *selected[i]));
    }
    send_json(res, 200,
              {{"items", items},
               {"total", selected.size()},
               {"page", page},
               {"page_size", page_size},
               {"pages", (selected.size() + page_size - 1) / page_size},
               {"progress", {{"pending", pending}, {"decided", decided}, {"by_level", by_level}}}});
}

void ReviewServer::Impl::decision(const httplib::Request& req, httplib::Response& res)
{
    const auto body = parse_body(req);
    Decision d;
    d.action = decision_action_from_string(body.at("action").get<std::string>());
    if (auto type = optional_string(body, "type")) {
        d.type = relevance_from_string(*type);
    }
    d.reviewer = body.value("reviewer", std::string());
    d.idempotency_key = optional_string(body, "idempotency_key");
    if (!d.idempotency_key && req.has_header("Idempotency-Key")) {
        d.idempotency_key = req.get_header_value("Idempotency-Key");
    }
    send_json(res, 200, store.decide(req.matches[1], d));
}

void ReviewServer::Impl::start_rank(const httplib::Request& req, httplib::Response& res)
{
    const auto body = parse_body(req);
    const auto set_id = body.at("set_id").get<std::string>();
    const auto model_id = body.at("model_id").get<std::string>();

    PipelineConfig config;
    config.method = retrieval_method_from_string(body.value("method", std::string("A")));
    config.initial_k = body.value("initial_k", config.initial_k);
    if (body.contains("final_k") && !body["final_k"].is_null()) {
        config.final_k = body["final_k"].get<std::size_t>();
    }
    config.verbosity = query_verbosity_from_string(body.value("verbosity", std::string("description_only")));
    config.validate();

    const auto state = store.state();
    auto model_it = state->processes.find(model_id);
    if (model_it == state->processes.end()) {
        throw NotFoundError("unknown process model '" + model_id + "'");
    }
    std::vector<std::string> node_ids = body.value("node_ids", std::vector<std::string>{});
    if (node_ids.empty()) {
        const auto level = body.contains("level") ? (body["level"].is_number_integer()
                                                         ? level_from_int(body["level"].get<int>())
                                                         : level_from_string(body["level"].get<std::string>()))
                                                  : Level::process;
        for (const auto* node : model_it->second.at_level(level)) {
            node_ids.push_back(node->node_id);
        }
    }
    for (const auto& id : node_ids) {
        model_it->second.at(id);
    }

    json stored_config = body;
    stored_config["node_ids"] = node_ids;
    const auto run_id = store.start_run(RunKind::rank, set_id, model_id, stored_config);

    launch([this, run_id, set_id, model_id, config, node_ids] {
        try {
            const auto snapshot = store.state();
            const auto& set = snapshot->sets.at(set_id);
            const auto& model = snapshot->processes.at(model_id);
            auto index = std::make_shared<const LexicalIndex>(LexicalIndex::build(set.paragraphs));
            auto chosen = providers.retrieval ? providers.retrieval(index) : fallback_providers(index);
            Retriever retriever(set, index, chosen);
            auto runs = retriever.run_many(model, node_ids, config);
            std::vector<Ranking> rankings;
            std::vector<std::string> warnings;
            for (auto& run : runs) {
                rankings.push_back(std::move(run.reranked));
                warnings.insert(warnings.end(), run.warnings.begin(), run.warnings.end());
            }
            store.finish_run(run_id, std::move(rankings), {}, std::move(warnings));
        } catch (const std::exception& e) {
            spdlog::error("rank run {} failed: {}", run_id, e.what());
            store.fail_run(run_id, e.what());
        }
    });
    send_json(res, 202, {{"run_id", run_id}, {"status", "running"}});
}

void ReviewServer::Impl::start_judge(const httplib::Request& req, httplib::Response& res)
{
    if (!providers.chat) {
        send_error(res, 503, "no chat provider configured");
        return;
    }
    const auto body = parse_body(req);
    const auto set_id = body.at("set_id").get<std::string>();
    const auto model_id = body.at("model_id").get<std::string>();

    JudgeConfig config;
    config.iteration = prompt_iteration_from_string(body.value("iteration", std::string("v3")));
    config.temperature = body.value("temperature", config.temperature);
    config.closure = body.value("closure", std::string("lenient")) == "strict" ? ClosureMode::strict
                                                                              : ClosureMode::lenient;
    config.in_flight = body.value("in_flight", config.in_flight);
    if (body.contains("post_filter_subprocess_threshold") && !body["post_filter_subprocess_threshold"].is_null()) {
        config.subprocess_post_filter = body["post_filter_subprocess_threshold"].get<std::size_t>();
    }

    json stored_config = body;
    stored_config["iteration"] = to_string(config.iteration);
    const auto run_id = store.start_run(RunKind::judge, set_id, model_id, stored_config);

    launch([this, run_id, set_id, model_id, config] {
        try {
            const auto snapshot = store.state();
            auto run = judge_study_set(*providers.chat, snapshot->sets.at(set_id), snapshot->processes.at(model_id),
                                       snapshot->documents, config);
            std::vector<std::string> warnings;
            for (const auto& failure : run.failures) {
                warnings.push_back(failure.para_id + ": " + failure.kind + " failure: " + failure.message);
            }
            store.finish_run(run_id, {}, std::move(run.judgments), std::move(warnings));
        } catch (const std::exception& e) {
            spdlog::error("judge run {} failed: {}", run_id, e.what());
            store.fail_run(run_id, e.what());
        }
    });
    send_json(res, 202, {{"run_id", run_id}, {"status", "running"}});
}

void ReviewServer::Impl::run_status(const httplib::Request& req, httplib::Response& res)
{
    const auto state = store.state();
    auto it = state->runs.find(req.matches[1]);
    if (it == state->runs.end()) {
        throw NotFoundError("unknown run '" + std::string(req.matches[1]) + "'");
    }
    auto j = to_json(it->second);
    const bool full = req.has_param("full") && req.get_param_value("full") != "0";
    j["ranking_count"] = it->second.rankings.size();
    j["judgment_count"] = it->second.judgments.size();
    if (!full) {
        j.erase("rankings");
        j.erase("judgments");
    }
    send_json(res, 200, j);
}

void ReviewServer::Impl::enqueue(const httplib::Request& req, httplib::Response& res)
{
    const auto body = parse_body(req);
    ReviewPolicy policy;
    policy.top_k = body.value("top_k", policy.top_k);
    policy.relevant_only = body.value("label_filter", std::string("non_irrelevant")) != "any";
    const auto created = store.enqueue_review(req.matches[1], policy);
    json items = json::array();
    for (const auto& item : created) {
        items.push_back(to_json(item));
    }
    send_json(res, 200, {{"created", created.size()}, {"items", items}});
}

void ReviewServer::Impl::routes()
{
    http.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}});
    });
    http.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { queue(req, res); });
    });
    http.Post(R"(/api/items/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { decision(req, res); });
    });
    http.Get(R"(/api/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto state = store.state();
            auto it = state->items.find(req.matches[1]);
            if (it == state->items.end()) {
                throw NotFoundError("unknown review item '" + std::string(req.matches[1]) + "'");
            }
            send_json(res, 200, enriched_item(*state, it->second));
        });
    });
    http.Get(R"(/api/process/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto state = store.state();
            auto it = state->processes.find(req.matches[1]);
            if (it == state->processes.end()) {
                throw NotFoundError("unknown process model '" + std::string(req.matches[1]) + "'");
            }
            send_json(res, 200, to_json(it->second));
        });
    });
    http.Post("/api/runs/rank", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { start_rank(req, res); });
    });
    http.Post("/api/runs/judge", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { start_judge(req, res); });
    });
    http.Get(R"(/api/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { run_status(req, res); });
    });
    http.Post(R"(/api/runs/([^/]+)/enqueue)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { enqueue(req, res); });
    });
    http.Get("/api/gold/export", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto gold = store.export_gold(resolve_model_id(*store.state(), req));
            res.status = 200;
            res.set_content(to_jsonl(gold_to_jsonl(gold)), "application/x-ndjson");
        });
    });
    http.Post("/api/gold/import", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto model_id = resolve_model_id(*store.state(), req);
            const auto records = parse_jsonl(req.body, "request body");
            store.import_gold(model_id, records);
            send_json(res, 200, {{"imported", records.size()}, {"model_id", model_id}});
        });
    });
    http.Get(R"(/api/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, run_report(*store.state(), req.matches[1])); });
    });
    http.Post("/api/sets", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            const auto set_id = body.at("set_id").get<std::string>();
            store.put_study_set(load_study_set(set_id, body.at("paragraphs").get<std::vector<json>>()));
            send_json(res, 201, {{"set_id", set_id}});
        });
    });
    http.Post("/api/processes", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto model = load_process(parse_body(req));
            store.put_process(model);
            send_json(res, 201, {{"model_id", model.model_id}});
        });
    });
    http.Post("/api/documents", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            const auto& list = body.is_array() ? body : body.at("documents");
            auto docs = load_documents(list.get<std::vector<json>>());
            store.put_documents(docs);
            send_json(res, 201, {{"documents", docs.size()}});
        });
    });
}

ReviewServer::ReviewServer(Store& store, ServiceProviders providers, std::optional<std::filesystem::path> static_dir)
    : m_impl(std::make_unique<Impl>(store, std::move(providers)))
{
    m_impl->routes();
    if (static_dir) {
        m_impl->http.set_mount_point("/", static_dir->string());
    }
}

ReviewServer::~ReviewServer()
{
    stop();
    m_impl->wait();
}

int ReviewServer::bind(const std::string& host, int port)
{
    if (port == 0) {
        return m_impl->http.bind_to_any_port(host);
    }
    return m_impl->http.bind_to_port(host, port) ? port : -1;
}

void ReviewServer::serve()
{
    m_impl->http.listen_after_bind();
}

void ReviewServer::stop()
{
    m_impl->http.stop();
}

void ReviewServer::wait_for_jobs()
{
    m_impl->wait();
}

}  // namespace regrel
