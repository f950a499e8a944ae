#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <fcntl.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "regrel/error.hpp"
#include "regrel/json_io.hpp"
#include "regrel/store.hpp"

namespace regrel {

namespace fs = std::filesystem;

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::now();
    const auto seconds = std::chrono::system_clock::to_time_t(now);
    const auto millis =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&seconds, &tm);
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(millis));
    return buffer;
}

namespace {

constexpr const char* kLogFile = "log.jsonl";
constexpr const char* kSnapshotDir = "snapshots";

std::string item_id(std::uint64_t n)
{
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "it-%06llu", static_cast<unsigned long long>(n));
    return buffer;
}

std::string run_id(std::uint64_t n)
{
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "run-%04llu", static_cast<unsigned long long>(n));
    return buffer;
}

void write_jsonl(const fs::path& path, const json& array)
{
    write_text_file_atomic(path, to_jsonl(array.get<std::vector<json>>()));
}

void fsync_directory(const fs::path& dir)
{
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

std::optional<std::uint64_t> snapshot_version(const fs::path& dir)
{
    const auto name = dir.filename().string();
    if (name.size() < 2 || name[0] != 'v' || !fs::exists(dir / "manifest.json")) {
        return std::nullopt;
    }
    try {
        return std::stoull(name.substr(1));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

StoreState read_snapshot(const fs::path& dir)
{
    const auto manifest = read_json_file(dir / "manifest.json");
    StoreState state;
    state.version = manifest.at("version").get<std::uint64_t>();
    state.next_item = manifest.at("next_item").get<std::uint64_t>();
    state.next_run = manifest.at("next_run").get<std::uint64_t>();
    state.manual_review = manifest.value("manual_review", std::set<std::string>{});
    state.idempotency = manifest.value("idempotency", std::map<std::string, json>{});

    for (const auto& j : read_jsonl_file(dir / "processes.jsonl")) {
        auto model = load_process(j);
        state.processes[model.model_id] = std::move(model);
    }
    for (const auto& j : read_jsonl_file(dir / "sets.jsonl")) {
        const auto set_id = j.at("set_id").get<std::string>();
        state.sets[set_id] = load_study_set(set_id, j.at("paragraphs").get<std::vector<json>>());
    }
    for (const auto& doc : load_documents(read_jsonl_file(dir / "documents.jsonl"))) {
        state.documents[doc.doc_id] = doc;
    }
    for (const auto& j : read_jsonl_file(dir / "runs.jsonl")) {
        auto run = run_record_from_json(j);
        state.runs[run.run_id] = std::move(run);
    }
    for (const auto& j : read_jsonl_file(dir / "items.jsonl")) {
        auto item = review_item_from_json(j);
        state.items[item.item_id] = std::move(item);
    }
    for (const auto& j : read_jsonl_file(dir / "gold.jsonl")) {
        const auto model_id = j.at("model_id").get<std::string>();
        state.gold[model_id] = load_gold(j.value("use_case_id", model_id), j.at("records").get<std::vector<json>>(),
                                         state.processes.at(model_id));
    }
    state.audit = read_jsonl_file(dir / "audit.jsonl");
    return state;
}

Store::Store(fs::path dir, Clock clock) : m_dir(std::move(dir)), m_clock(std::move(clock))
{
    if (!m_clock) {
        m_clock = utc_timestamp;
    }
    load();
}

std::shared_ptr<const StoreState> Store::state() const
{
    std::lock_guard lock(m_state_mutex);
    return m_state;
}

std::size_t Store::log_records() const
{
    return m_log_records;
}

void Store::load()
{
    fs::create_directories(m_dir / kSnapshotDir);

    StoreState state;
    std::optional<std::uint64_t> best;
    for (const auto& entry : fs::directory_iterator(m_dir / kSnapshotDir)) {
        auto version = entry.is_directory() ? snapshot_version(entry.path()) : std::nullopt;
        if (version && (!best || *version > *best)) {
            best = version;
        }
    }
    if (best) {
        state = read_snapshot(m_dir / kSnapshotDir / ("v" + std::to_string(*best)));
    }

    const auto log_path = m_dir / kLogFile;
    if (fs::exists(log_path)) {
        const auto content = read_text_file(log_path);
        std::size_t offset = 0;
        std::size_t line_no = 0;
        while (offset < content.size()) {
            const auto end = content.find('\n', offset);
            ++line_no;
            const bool terminated = end != std::string::npos;
            const auto line = std::string_view(content).substr(offset, (terminated ? end : content.size()) - offset);
            json record;
            bool parsed = true;
            try {
                record = json::parse(line);
            } catch (const json::parse_error&) {
                parsed = false;
            }
            const bool last = !terminated || end + 1 == content.size();
            if (!terminated || !parsed) {
                if (!last) {
                    throw ParseError("store log is corrupt at line " + std::to_string(line_no), std::string(line));
                }
                spdlog::warn("store log: truncating torn record at line {}", line_no);
                fs::resize_file(log_path, offset);
                break;
            }
            const auto seq = record.at("seq").get<std::uint64_t>();
            if (seq > state.version) {
                apply_record(state, record);
            }
            ++m_log_records;
            offset = end + 1;
        }
    }
    m_state = std::make_shared<const StoreState>(std::move(state));
}

void Store::append_to_log(const json& record)
{
    const auto line = record.dump() + "\n";
    const auto path = m_dir / kLogFile;
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) {
        throw Error("cannot open store log " + path.string());
    }
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(fd, line.data() + written, line.size() - written);
        if (n <= 0) {
            ::close(fd);
            throw Error("cannot append to store log " + path.string());
        }
        written += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    ++m_log_records;
}

json Store::commit(json record)
{
    // Caller holds m_writer. Applying to a copy first keeps rejected commands out of the log.
    auto next = std::make_shared<StoreState>(*state());
    record["seq"] = next->version + 1;
    record["at"] = m_clock();
    auto result = apply_record(*next, record);
    append_to_log(record);
    std::lock_guard lock(m_state_mutex);
    m_state = std::move(next);
    return result;
}

void Store::put_study_set(const StudySet& set)
{
    json paragraphs = json::array();
    for (const auto& p : set.paragraphs) {
        paragraphs.push_back(to_json(p, true));
    }
    std::lock_guard lock(m_writer);
    commit({{"type", "put_set"}, {"data", {{"set_id", set.use_case_id}, {"paragraphs", paragraphs}}}});
}

void Store::put_process(const ProcessModel& model)
{
    validate_process(model);
    std::lock_guard lock(m_writer);
    commit({{"type", "put_process"}, {"data", to_json(model)}});
}

void Store::put_documents(const std::vector<RegulatoryDocument>& documents)
{
    json docs = json::array();
    for (const auto& d : documents) {
        docs.push_back(to_json(d));
    }
    std::lock_guard lock(m_writer);
    commit({{"type", "put_documents"}, {"data", {{"documents", docs}}}});
}

std::string Store::start_run(RunKind kind, const std::string& set_id, const std::string& model_id, const json& config)
{
    std::lock_guard lock(m_writer);
    const auto current = state();
    if (!current->sets.contains(set_id)) {
        throw NotFoundError("unknown study set '" + set_id + "'");
    }
    if (!current->processes.contains(model_id)) {
        throw NotFoundError("unknown process model '" + model_id + "'");
    }
    const auto id = run_id(current->next_run);
    commit({{"type", "run_started"},
            {"data",
             {{"run_id", id}, {"kind", to_string(kind)}, {"set_id", set_id}, {"model_id", model_id},
              {"config", config}}}});
    return id;
}

void Store::finish_run(const std::string& id, std::vector<Ranking> rankings, std::vector<LlmJudgment> judgments,
                       std::vector<std::string> warnings)
{
    json ranking_json = json::array();
    for (const auto& r : rankings) {
        ranking_json.push_back(to_json(r));
    }
    json judgment_json = json::array();
    for (const auto& j : judgments) {
        judgment_json.push_back(to_json(j));
    }
    std::lock_guard lock(m_writer);
    if (!state()->runs.contains(id)) {
        throw NotFoundError("unknown run '" + id + "'");
    }
    commit({{"type", "run_finished"},
            {"data",
             {{"run_id", id}, {"status", "done"}, {"rankings", ranking_json}, {"judgments", judgment_json},
              {"warnings", warnings}}}});
}

void Store::fail_run(const std::string& id, const std::string& error)
{
    std::lock_guard lock(m_writer);
    if (!state()->runs.contains(id)) {
        throw NotFoundError("unknown run '" + id + "'");
    }
    commit({{"type", "run_finished"}, {"data", {{"run_id", id}, {"status", "failed"}, {"error", error}}}});
}

std::vector<ReviewItem> Store::enqueue_review(const std::string& id, const ReviewPolicy& policy)
{
    std::lock_guard lock(m_writer);
    const auto current = state();
    auto run_it = current->runs.find(id);
    if (run_it == current->runs.end()) {
        throw NotFoundError("unknown run '" + id + "'");
    }
    const auto& run = run_it->second;
    if (run.status != RunStatus::done) {
        throw ValidationError("run '" + id + "' has not finished");
    }
    const auto& model = current->processes.at(run.model_id);

    std::set<std::pair<std::string, std::string>> queued;
    for (const auto& [item_key, item] : current->items) {
        if (item.run_id == id) {
            queued.emplace(item.para_id, item.query_node_id);
        }
    }

    std::vector<ReviewItem> fresh;
    auto next = current->next_item;
    auto add = [&](ReviewItem item) {
        if (!queued.emplace(item.para_id, item.query_node_id).second) {
            return;
        }
        item.item_id = item_id(next++);
        item.run_id = id;
        item.model_id = run.model_id;
        item.level = model.at(item.query_node_id).level;
        fresh.push_back(std::move(item));
    };

    if (run.kind == RunKind::rank) {
        for (const auto& ranking : run.rankings) {
            const auto k = std::min(policy.top_k, ranking.entries.size());
            for (std::size_t i = 0; i < k; ++i) {
                ReviewItem item;
                item.para_id = ranking.entries[i].para_id;
                item.query_node_id = ranking.query_node_id;
                item.method = std::string(to_string(ranking.method));
                item.machine_score = ranking.entries[i].score;
                add(std::move(item));
            }
        }
    } else {
        const auto method = "llm_" + run.config.value("iteration", std::string("v3"));
        for (const auto& judgment : run.judgments) {
            for (const auto& node : model.nodes) {
                const auto type = judgment.labels.at(node.level, node.node_id);
                if (policy.relevant_only ? !is_relevant(type) : node.level != Level::process && !is_relevant(type)) {
                    continue;
                }
                ReviewItem item;
                item.para_id = judgment.para_id;
                item.query_node_id = node.node_id;
                item.method = method;
                item.machine_label = type;
                item.machine_justification = judgment.justification;
                add(std::move(item));
            }
        }
    }

    if (fresh.empty()) {
        return fresh;
    }
    json items = json::array();
    for (const auto& item : fresh) {
        items.push_back(to_json(item));
    }
    commit({{"type", "enqueue"}, {"data", {{"run_id", id}, {"items", items}}}});
    return fresh;
}

json Store::decide(const std::string& id, const Decision& decision)
{
    std::lock_guard lock(m_writer);
    const auto current = state();
    if (decision.idempotency_key) {
        if (auto it = current->idempotency.find(*decision.idempotency_key); it != current->idempotency.end()) {
            return it->second;
        }
    }
    auto item_it = current->items.find(id);
    if (item_it == current->items.end()) {
        throw NotFoundError("unknown review item '" + id + "'");
    }
    const auto& item = item_it->second;
    if (item.status != ReviewStatus::pending) {
        throw ConflictError("item '" + id + "' was already decided", to_json(item).dump());
    }

    RelevanceType label = RelevanceType::irrelevant;
    switch (decision.action) {
    case DecisionAction::confirm:
        if (item.machine_label && decision.type && *decision.type != *item.machine_label) {
            throw ValidationError("confirm must keep the machine label; use retype to change it");
        }
        if (item.machine_label) {
            label = *item.machine_label;
        } else if (decision.type) {
            label = *decision.type;
        } else {
            throw ValidationError("item '" + id + "' has no machine label; confirm needs a type");
        }
        if (!is_relevant(label)) {
            throw ValidationError("confirm needs a relevant type; use reject instead");
        }
        break;
    case DecisionAction::reject:
        label = RelevanceType::irrelevant;
        break;
    case DecisionAction::retype:
        if (!decision.type || !is_relevant(*decision.type)) {
            throw ValidationError("retype needs the type informative or compliance");
        }
        label = *decision.type;
        break;
    }

    json data{{"item_id", id},
              {"action", decision.action == DecisionAction::confirm  ? "confirm"
                         : decision.action == DecisionAction::reject ? "reject"
                                                                     : "retype"},
              {"label", to_string(label)},
              {"reviewer", decision.reviewer}};
    if (decision.idempotency_key) {
        data["idempotency_key"] = *decision.idempotency_key;
    }
    return commit({{"type", "decision"}, {"data", data}});
}

void Store::import_gold(const std::string& model_id, const std::vector<json>& records)
{
    std::lock_guard lock(m_writer);
    if (!state()->processes.contains(model_id)) {
        throw NotFoundError("unknown process model '" + model_id + "'");
    }
    commit({{"type", "gold_import"}, {"data", {{"model_id", model_id}, {"records", records}}}});
}

GoldStandard Store::export_gold(const std::string& model_id) const
{
    const auto current = state();
    auto it = current->gold.find(model_id);
    if (it == current->gold.end()) {
        if (!current->processes.contains(model_id)) {
            throw NotFoundError("unknown process model '" + model_id + "'");
        }
        return GoldStandard{model_id, {}};
    }
    return it->second;
}

fs::path Store::checkpoint()
{
    const auto current = state();
    const auto snapshots = m_dir / kSnapshotDir;
    const auto final_dir = snapshots / ("v" + std::to_string(current->version));
    if (fs::exists(final_dir / "manifest.json")) {
        return final_dir;
    }
    const auto tmp = snapshots / (".tmp-v" + std::to_string(current->version));
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    const auto j = to_json(*current);
    write_jsonl(tmp / "sets.jsonl", j["sets"]);
    write_jsonl(tmp / "processes.jsonl", j["processes"]);
    write_jsonl(tmp / "documents.jsonl", j["documents"]);
    write_jsonl(tmp / "runs.jsonl", j["runs"]);
    write_jsonl(tmp / "items.jsonl", j["items"]);
    write_jsonl(tmp / "gold.jsonl", j["gold"]);
    write_jsonl(tmp / "audit.jsonl", j["audit"]);
    // The manifest goes last: a snapshot without one is ignored on load.
    write_text_file_atomic(tmp / "manifest.json", json{{"version", j["version"]},
                                                       {"next_item", j["next_item"]},
                                                       {"next_run", j["next_run"]},
                                                       {"manual_review", j["manual_review"]},
                                                       {"idempotency", j["idempotency"]}}
                                                      .dump(2));
    fs::rename(tmp, final_dir);
    fsync_directory(snapshots);
    return final_dir;
}

json run_report(const StoreState& state, const std::string& id)
{
    auto run_it = state.runs.find(id);
    if (run_it == state.runs.end()) {
        throw NotFoundError("unknown run '" + id + "'");
    }
    const auto& run = run_it->second;
    if (run.status != RunStatus::done) {
        throw ValidationError("run '" + id + "' is " + std::string(to_string(run.status)));
    }
    const auto& set = state.sets.at(run.set_id);
    const auto& model = state.processes.at(run.model_id);
    auto gold_it = state.gold.find(run.model_id);
    if (gold_it == state.gold.end()) {
        throw ValidationError("no gold standard for process model '" + run.model_id + "'");
    }

    GoldStandard gold{gold_it->second.use_case_id, {}};
    std::size_t missing = 0;
    for (const auto& para : set.paragraphs) {
        auto it = gold_it->second.labels.find(para.para_id);
        if (it == gold_it->second.labels.end()) {
            ++missing;
        } else {
            gold.labels.emplace(para.para_id, it->second);
        }
    }
    if (missing > 0) {
        throw ValidationError("gold standard lacks " + std::to_string(missing) + " paragraphs of study set '" +
                              run.set_id + "'");
    }

    Predictions predictions;
    std::vector<std::string> excluded;
    std::string method;
    if (run.kind == RunKind::rank) {
        std::vector<std::pair<std::string, std::vector<std::string>>> selected;
        for (const auto& ranking : run.rankings) {
            const auto k = run.config.contains("final_k") && run.config["final_k"].is_number_unsigned()
                               ? run.config["final_k"].get<std::size_t>()
                               : gold_relevant_count(gold, model, ranking.query_node_id);
            selected.emplace_back(ranking.query_node_id, binarize_top_k(ranking, k));
            method = std::string(to_string(ranking.method));
        }
        predictions = selections_to_predictions(set, model, selected);
    } else {
        method = "llm_" + run.config.value("iteration", std::string("v3"));
        for (const auto& judgment : run.judgments) {
            predictions.emplace(judgment.para_id, judgment.labels);
        }
        for (const auto& para : set.paragraphs) {
            if (!predictions.contains(para.para_id)) {
                excluded.push_back(para.para_id);
            }
        }
    }
    const auto groups = groups_of(set);
    auto report = build_report(predictions, gold, model, &groups, excluded);
    report.method = method;
    auto out = to_json(report);
    out["run_id"] = id;
    return out;
}

}  // namespace regrel
