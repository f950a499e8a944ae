#include <algorithm>
#include <mutex>

#include <spdlog/spdlog.h>

#include "regrel/error.hpp"
#include "regrel/llm.hpp"
#include "regrel/parallel.hpp"
#include "regrel/text.hpp"

namespace regrel {

namespace {

/// Returns the first balanced {...} span, honouring JSON string escapes.
std::string_view first_json_object(std::string_view raw)
{
    const auto start = raw.find('{');
    if (start == std::string_view::npos) {
        throw ParseError("reply contains no JSON object", std::string(raw));
    }
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}' && --depth == 0) {
            return raw.substr(start, i - start + 1);
        }
    }
    throw ParseError("reply contains an unterminated JSON object", std::string(raw));
}

RelevanceType reply_type(const json& value, const std::string& where, std::string_view raw)
{
    if (!value.is_string()) {
        throw ParseError("reply field " + where + " must be a relevance type string", std::string(raw));
    }
    try {
        return relevance_from_string(value.get<std::string>());
    } catch (const ValidationError&) {
        throw ParseError("reply field " + where + " has unknown relevance type '" + value.get<std::string>() + "'",
                         std::string(raw));
    }
}

std::map<std::string, RelevanceType> reply_level(const json& reply, const char* key, Level level,
                                                 const ProcessModel& model, std::string_view raw)
{
    std::map<std::string, RelevanceType> out;
    auto it = reply.find(key);
    if (it == reply.end() || it->is_null()) {
        return out;
    }
    if (!it->is_object()) {
        throw ParseError(std::string("reply field ") + key + " must be an object", std::string(raw));
    }
    for (const auto& [node_id, value] : it->items()) {
        const auto* node = model.find(node_id);
        if (node == nullptr) {
            throw ParseError("reply references unknown node id '" + node_id + "'", std::string(raw));
        }
        if (node->level != level) {
            throw ParseError("reply lists node '" + node_id + "' under " + key + " but it is " +
                                 std::string(to_string(node->level)),
                             std::string(raw));
        }
        out[node_id] = reply_type(value, std::string(key) + "." + node_id, raw);
    }
    return out;
}

json labels_to_reply(const std::map<std::string, RelevanceType>& labels)
{
    json out = json::object();
    for (const auto& [node_id, type] : labels) {
        out[node_id] = to_string(type);
    }
    return out;
}

}  // namespace

LlmJudgment parse_reply(std::string_view raw, const ProcessModel& model, std::string para_id, ClosureMode mode)
{
    const auto object = first_json_object(raw);
    json reply;
    try {
        reply = json::parse(object);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("reply is not valid JSON: ") + e.what(), std::string(raw));
    }

    LlmJudgment judgment;
    judgment.para_id = std::move(para_id);
    judgment.raw_reply = std::string(raw);

    auto level1 = reply.find("level1");
    if (level1 == reply.end()) {
        throw ParseError("reply lacks the level1 field", std::string(raw));
    }
    judgment.labels.level1 = reply_type(*level1, "level1", raw);
    judgment.labels.level2 = reply_level(reply, "level2", Level::subprocess, model, raw);
    judgment.labels.level3 = reply_level(reply, "level3", Level::task, model, raw);

    if (auto it = reply.find("justification"); it != reply.end() && !it->is_null()) {
        if (!it->is_string()) {
            throw ParseError("reply field justification must be a string", std::string(raw));
        }
        judgment.justification = it->get<std::string>();
    }

    const auto violations = closure_violations(judgment.labels, model);
    if (!violations.empty()) {
        if (mode == ClosureMode::strict) {
            throw ParseError("propagation violation at node '" + violations.front() + "'", std::string(raw));
        }
        judgment.labels = normalize_labels(judgment.labels, model);
        judgment.warnings.push_back("propagation violation at node '" + violations.front() +
                                    "' closed upward");
        spdlog::warn("paragraph {}: {}", judgment.para_id, judgment.warnings.back());
    }
    return judgment;
}

json to_reply_json(const LlmJudgment& judgment)
{
    return json{{"level1", to_string(judgment.labels.level1)},
                {"level2", labels_to_reply(judgment.labels.level2)},
                {"level3", labels_to_reply(judgment.labels.level3)},
                {"justification", judgment.justification}};
}

json to_json(const LlmJudgment& judgment)
{
    auto j = to_json(judgment.labels);
    j["para_id"] = judgment.para_id;
    j["justification"] = judgment.justification;
    j["raw_reply"] = judgment.raw_reply;
    if (!judgment.warnings.empty()) {
        j["warnings"] = judgment.warnings;
    }
    return j;
}

LlmJudgment judgment_from_json(const json& j)
{
    LlmJudgment judgment;
    judgment.para_id = j.at("para_id").get<std::string>();
    judgment.labels = label_set_from_json(j);
    judgment.justification = j.value("justification", std::string());
    judgment.raw_reply = j.value("raw_reply", std::string());
    judgment.warnings = j.value("warnings", std::vector<std::string>{});
    return judgment;
}

bool apply_subprocess_post_filter(LlmJudgment& judgment, std::size_t threshold)
{
    std::size_t relevant = 0;
    for (const auto& [node_id, type] : judgment.labels.level2) {
        relevant += is_relevant(type) ? 1 : 0;
    }
    if (threshold == 0 || relevant < threshold) {
        return false;
    }
    judgment.labels = LabelSet{};
    judgment.warnings.push_back("relevant for " + std::to_string(relevant) +
                                " sub-processes; cleared by the sub-process post-filter");
    return true;
}

RemoteChatProvider::RemoteChatProvider(HttpEndpoint endpoint) : m_endpoint(std::move(endpoint)) {}

std::string RemoteChatProvider::tag() const
{
    return "remote:" + m_endpoint.base_url;
}

std::string RemoteChatProvider::complete(const std::vector<ChatMessage>& messages, double temperature) const
{
    json body_messages = json::array();
    for (const auto& m : messages) {
        body_messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    const auto reply = post_json(m_endpoint, "/chat", json{{"messages", body_messages}, {"temperature", temperature}});
    auto it = reply.find("content");
    if (it == reply.end() || !it->is_string()) {
        throw ParseError("chat provider reply lacks a content string", reply.dump());
    }
    return it->get<std::string>();
}

LlmJudgment judge(const ChatProvider& provider, const PromptBundle& bundle, const ProcessModel& model,
                  const JudgeConfig& config)
{
    const auto raw = provider.complete({{"user", bundle.rendered}}, config.temperature);
    auto judgment = parse_reply(raw, model, bundle.para_id, config.closure);
    if (config.subprocess_post_filter) {
        apply_subprocess_post_filter(judgment, *config.subprocess_post_filter);
    }
    return judgment;
}

JudgeRun judge_study_set(const ChatProvider& provider, const StudySet& set, const ProcessModel& model,
                         const std::map<std::string, RegulatoryDocument>& documents, const JudgeConfig& config)
{
    if (set.paragraphs.empty()) {
        return {};
    }
    // Surfaces an incomplete model once, before any request is sent.
    build_prompt(model, set.paragraphs.front(), placeholder_document(set.paragraphs.front()), config.iteration);

    std::vector<std::optional<LlmJudgment>> slots(set.paragraphs.size());
    JudgeRun run;
    std::mutex failures_mutex;

    parallel_for(set.paragraphs.size(), config.in_flight, [&](std::size_t i) {
        const auto& para = set.paragraphs[i];
        auto doc_it = documents.find(para.doc_id);
        const auto doc = doc_it != documents.end() ? doc_it->second : placeholder_document(para);
        const auto bundle = build_prompt(model, para, doc, config.iteration);
        try {
            slots[i] = judge(provider, bundle, model, config);
        } catch (const TransportError& e) {
            std::lock_guard lock(failures_mutex);
            run.failures.push_back({para.para_id, "transport", e.what(), {}});
        } catch (const ParseError& e) {
            std::lock_guard lock(failures_mutex);
            run.failures.push_back({para.para_id, "parse", e.what(), e.raw()});
        }
    });

    for (auto& slot : slots) {
        if (slot) {
            run.judgments.push_back(std::move(*slot));
        }
    }
    std::sort(run.failures.begin(), run.failures.end(),
              [](const JudgeFailure& a, const JudgeFailure& b) { return a.para_id < b.para_id; });
    return run;
}

PredictionRecord to_prediction(const LlmJudgment& judgment, std::string method, std::string digest)
{
    return {judgment.para_id, judgment.labels, std::move(method), std::move(digest)};
}

std::string config_digest(const JudgeConfig& config)
{
    json j{{"iteration", to_string(config.iteration)},
           {"temperature", config.temperature},
           {"closure", config.closure == ClosureMode::strict ? "strict" : "lenient"},
           {"subprocess_post_filter", config.subprocess_post_filter ? json(*config.subprocess_post_filter) : json()}};
    return hex_digest(j.dump());
}

}  // namespace regrel
