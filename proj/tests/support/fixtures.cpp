#include "fixtures.hpp"

#include <atomic>
#include <chrono>
#include <fstream>

#include "generators.hpp"
#include "regrel/json_io.hpp"

namespace regrel::testing {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kInsuranceTerms = {"policyholder", "premium",  "coverage", "insurer",
                                                  "underwriting", "actuarial", "reinsurance", "indemnity",
                                                  "solvency",     "broker",   "annuity",  "deductible"};
const std::vector<std::string> kBankingTerms = {"deposit", "lending", "borrower", "creditworthiness", "liquidity",
                                                "mortgage", "custody", "interest", "overdraft", "settlement",
                                                "counterparty", "collateral"};
const std::vector<std::string> kUnrelatedTerms = {"aviation", "fisheries", "livestock", "forestry", "railway",
                                                  "pharmacy", "mining",    "harbour",   "vineyard", "irrigation",
                                                  "pesticide", "turbine"};

std::string pad(std::size_t n, int width)
{
    auto s = std::to_string(n);
    return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

struct Node {
    std::string id;
    std::string parent;
    std::vector<std::string> words;
};

}  // namespace

UseCaseShape insurance_shape()
{
    return {"uc1", "insurance", 21, 28, 220, 220, 7, 31};
}

UseCaseShape banking_shape()
{
    return {"uc2", "banking", 24, 7, 140, 140, 7, 19};
}

SyntheticUseCase make_use_case(const UseCaseShape& shape, std::uint64_t seed)
{
    Rng rng(seed);
    SyntheticUseCase uc;
    uc.shape = shape;
    const auto& business = shape.domain == "banking" ? kBankingTerms : kInsuranceTerms;
    const std::string prefix = shape.id;

    // Documents: an internal handbook, an external act of the domain, and an
    // external act from an unrelated domain for group C.
    const std::string internal_doc = prefix + "-handbook";
    const std::string external_doc = prefix + "-act";
    const std::string unrelated_doc = prefix + "-other-act";
    uc.documents = {
        {{"doc_id", internal_doc}, {"title", "Internal " + shape.domain + " handbook"}, {"origin", "internal"},
         {"jurisdiction", "DE"}, {"applicable_domain", shape.domain}, {"source_uri", nullptr}},
        {{"doc_id", external_doc}, {"title", "Supervisory act on " + shape.domain}, {"origin", "external"},
         {"jurisdiction", "EU"}, {"applicable_domain", shape.domain}, {"source_uri", "https://example.org/act"}},
        {{"doc_id", unrelated_doc}, {"title", "Act on technical installations"}, {"origin", "external"},
         {"jurisdiction", "EU"}, {"applicable_domain", "domain-independent"}, {"source_uri", nullptr}},
    };

    // Process tree with pseudo-word vocabulary per node.
    auto words = pseudo_words(rng, 4 * (1 + shape.subprocesses + shape.tasks));
    std::size_t next = 0;
    auto take = [&](std::size_t n) {
        std::vector<std::string> out(words.begin() + next, words.begin() + next + n);
        next += n;
        return out;
    };
    std::vector<Node> subs;
    std::vector<Node> tasks;
    json nodes = json::array();
    auto root_words = take(4);
    nodes.push_back({{"node_id", prefix + "-P"},
                     {"level", 1},
                     {"name", "Handle " + shape.domain + " cases"},
                     {"description", "End to end handling of " + shape.domain + " cases: " + join_words(root_words) +
                                         " with " + business[0] + " and " + business[1] + "."},
                     {"parent_id", nullptr},
                     {"kind", "process"}});
    for (std::size_t s = 0; s < shape.subprocesses; ++s) {
        Node node{prefix + "-S" + std::to_string(s + 1), prefix + "-P", take(4)};
        nodes.push_back({{"node_id", node.id},
                         {"level", 2},
                         {"name", "Sub-process " + std::to_string(s + 1)},
                         {"description", "Sub-process in which staff " + join_words(node.words) + "."},
                         {"parent_id", node.parent},
                         {"kind", "subprocess"}});
        subs.push_back(std::move(node));
    }
    for (std::size_t t = 0; t < shape.tasks; ++t) {
        const auto& parent = subs[t % subs.size()];
        Node node{prefix + "-T" + pad(t + 1, 2), parent.id, take(4)};
        const bool event = t % 6 == 5;
        nodes.push_back({{"node_id", node.id},
                         {"level", 3},
                         {"name", (event ? "Notify " : "Task ") + std::to_string(t + 1)},
                         {"description", (event ? "Send a message once " : "Employees ") + join_words(node.words) +
                                             " during " + parent.words[0] + "."},
                         {"parent_id", node.parent},
                         {"kind", event ? "throwing_event" : "task"}});
        tasks.push_back(std::move(node));
    }
    uc.process = {{"model_id", prefix + "-process"},
                  {"context",
                   {{"business_id", prefix + "-business"},
                    {"location", "Germany"},
                    {"domain", shape.domain},
                    {"size", "large"}}},
                  {"nodes", nodes}};

    struct Draft {
        json record;
        json gold;
    };
    std::vector<Draft> drafts;
    auto base_record = [&](const std::string& doc, const std::string& body, const char* group) {
        json r{{"doc_id", doc},
               {"section_title", "Section " + std::to_string(rng.between(1, 12))},
               {"subsection", rng.chance(0.5) ? json("Paragraph " + std::to_string(rng.between(1, 9))) : json()},
               {"body", body},
               {"group", group}};
        return r;
    };
    auto irrelevant_gold = [] {
        return json{{"level1", "irrelevant"}, {"level2", json::object()}, {"level3", json::object()}};
    };

    const auto group_a = shape.compliance + shape.informative;
    for (std::size_t i = 0; i < group_a; ++i) {
        const bool compliance = i < shape.compliance;
        const auto& task = tasks[(i * 5) % tasks.size()];
        const auto& parent = *std::find_if(subs.begin(), subs.end(), [&](const Node& n) { return n.id == task.parent; });
        const std::string type = compliance ? "compliance" : "informative";
        std::string body =
            compliance ? "The undertaking must " + task.words[0] + " the " + task.words[1] + " " + task.words[2] +
                             " before every " + parent.words[0] + " step and keep evidence of the " + task.words[3] +
                             " outcome for each " + rng.pick(business) + "."
                       : "This provision explains how " + task.words[0] + " and " + task.words[1] +
                             " relate to the " + parent.words[0] + " activities, in particular " + task.words[2] +
                             ", within the " + rng.pick(business) + " sector.";
        auto record = base_record(i % 3 == 0 ? internal_doc : external_doc, body, "A");
        record["gold_type_hint"] = type;
        json gold{{"level1", type}, {"level2", {{parent.id, type}}}, {"level3", {{task.id, type}}}};
        drafts.push_back({record, gold});
    }
    for (std::size_t i = 0; i < shape.group_b; ++i) {
        std::string body = "Undertakings active in " + rng.pick(business) + " should publish " + rng.pick(business) +
                           " information and report " + rng.pick(business) + " figures on " + rng.pick(business) +
                           " matters to the supervisor once a year.";
        drafts.push_back({base_record(i % 2 == 0 ? internal_doc : external_doc, body, "B"), irrelevant_gold()});
    }
    for (std::size_t i = 0; i < shape.group_c; ++i) {
        std::string body = "Operators of " + rng.pick(kUnrelatedTerms) + " facilities must register their " +
                           rng.pick(kUnrelatedTerms) + " equipment and notify the " + rng.pick(kUnrelatedTerms) +
                           " authority about " + rng.pick(kUnrelatedTerms) + " incidents without delay.";
        drafts.push_back({base_record(unrelated_doc, body, "C"), irrelevant_gold()});
    }

    rng.shuffle(drafts);
    for (std::size_t i = 0; i < drafts.size(); ++i) {
        const auto para_id = prefix + "-p" + pad(i + 1, 4);
        drafts[i].record["para_id"] = para_id;
        drafts[i].gold["para_id"] = para_id;
        drafts[i].gold["provenance"] = "synthetic fixture";
        uc.study_set.push_back(drafts[i].record);
        uc.gold.push_back(drafts[i].gold);
    }
    return uc;
}

SyntheticUseCase crowd_subset(const SyntheticUseCase& full, std::size_t group_b, std::size_t group_c)
{
    SyntheticUseCase out;
    out.shape = full.shape;
    out.shape.group_b = group_b;
    out.shape.group_c = group_c;
    out.documents = full.documents;
    out.process = full.process;
    std::size_t b = 0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < full.study_set.size(); ++i) {
        const auto group = full.study_set[i]["group"].get<std::string>();
        const bool keep = group == "A" || (group == "B" && b++ < group_b) || (group == "C" && c++ < group_c);
        if (keep) {
            out.study_set.push_back(full.study_set[i]);
            out.gold.push_back(full.gold[i]);
        }
    }
    return out;
}

StudySet study_set_of(const SyntheticUseCase& uc)
{
    return load_study_set(uc.shape.id, uc.study_set);
}

ProcessModel model_of(const SyntheticUseCase& uc)
{
    return load_process(uc.process);
}

GoldStandard gold_of(const SyntheticUseCase& uc)
{
    auto set = study_set_of(uc);
    auto groups = groups_of(set);
    return load_gold(uc.shape.id, uc.gold, model_of(uc), &groups);
}

std::map<std::string, RegulatoryDocument> documents_of(const SyntheticUseCase& uc)
{
    std::map<std::string, RegulatoryDocument> out;
    for (auto& doc : load_documents(uc.documents)) {
        out.emplace(doc.doc_id, doc);
    }
    return out;
}

void write_use_case(const SyntheticUseCase& uc, const fs::path& dir)
{
    fs::create_directories(dir);
    write_text_file_atomic(dir / "documents.jsonl", to_jsonl(uc.documents));
    write_text_file_atomic(dir / "study_set.jsonl", to_jsonl(uc.study_set));
    write_text_file_atomic(dir / "process.json", uc.process.dump(2));
    write_text_file_atomic(dir / "gold.jsonl", to_jsonl(uc.gold));
}

ProcessModel small_model()
{
    json source = {
        {"model_id", "small"},
        {"context", {{"location", "Austria"}, {"domain", "insurance"}, {"size", "medium"}}},
        {"nodes",
         {{{"node_id", "P"}, {"level", 1}, {"name", "Claims"}, {"description", "Settle insurance claims"},
           {"kind", "process"}},
          {{"node_id", "S1"}, {"level", 2}, {"name", "Intake"}, {"description", "Receive and register the claim"},
           {"parent_id", "P"}, {"kind", "subprocess"}},
          {{"node_id", "S2"}, {"level", 2}, {"name", "Payout"}, {"description", "Pay the approved amount"},
           {"parent_id", "P"}, {"kind", "subprocess"}},
          {{"node_id", "T1"}, {"level", 3}, {"name", "Register"}, {"description", "Record the claim in the ledger"},
           {"parent_id", "S1"}, {"kind", "task"}},
          {{"node_id", "T2"}, {"level", 3}, {"name", "Verify"}, {"description", "Verify the identity of the claimant"},
           {"parent_id", "S1"}, {"kind", "task"}},
          {{"node_id", "E1"}, {"level", 3}, {"name", "Acknowledge"},
           {"description", "Send an acknowledgement to the claimant"}, {"parent_id", "S1"},
           {"kind", "throwing_event"}},
          {{"node_id", "T3"}, {"level", 3}, {"name", "Transfer"}, {"description", "Transfer money to the claimant"},
           {"parent_id", "S2"}, {"kind", "task"}}}}};
    return load_process(source);
}

std::vector<WorkerSubmission> three_worker_submissions()
{
    auto make = [](std::string worker, std::string at, CrowdPhase phase) {
        WorkerSubmission s;
        s.worker_id = std::move(worker);
        s.para_id = "p";
        s.phase = phase;
        s.received_at = std::move(at);
        return s;
    };
    const auto inf = RelevanceType::informative;
    const auto cmp = RelevanceType::compliance;

    auto w1a = make("w1", "2024-01-01T10:01", CrowdPhase::phase1);
    w1a.phase1 = Phase1Answer{true, {"S1"}};
    w1a.selected_options = {"Relevant"};
    auto w2a = make("w2", "2024-01-01T10:02", CrowdPhase::phase1);
    w2a.phase1 = Phase1Answer{true, {"S1", "S2"}};
    w2a.selected_options = {"Relevant"};
    auto w3a = make("w3", "2024-01-01T10:03", CrowdPhase::phase1);
    w3a.phase1 = Phase1Answer{false, {}};
    w3a.selected_options = {"Not relevant"};
    w3a.clicked_forbidden_option = true;

    auto w1b = make("w1", "2024-01-01T11:01", CrowdPhase::phase2);
    w1b.phase2 = Phase2Answer{{{"T1", inf}}};
    auto w2b = make("w2", "2024-01-01T11:02", CrowdPhase::phase2);
    w2b.phase2 = Phase2Answer{{{"T1", cmp}, {"T3", inf}}};
    auto w3b = make("w3", "2024-01-01T11:03", CrowdPhase::phase2);
    w3b.phase2 = Phase2Answer{{{"T2", cmp}}};
    w3b.clicked_forbidden_option = true;

    // Deliberately not in arrival order.
    return {w2a, w1a, w3a, w1b, w2b, w3b};
}

std::vector<std::string> malformed_replies()
{
    return {
        "",
        "I cannot decide.",
        "{\"level1\": \"informative\"",
        "{level1: informative}",
        R"({"level2": {}})",
        R"({"level1": 3})",
        R"({"level1": "maybe"})",
        R"({"level1": "informative", "level2": {"S9": "informative"}})",
        R"({"level1": "informative", "level2": {"T1": "informative"}})",
        R"({"level1": "informative", "level3": {"S1": "informative"}})",
        R"({"level1": "informative", "level2": ["S1"]})",
        R"({"level1": "informative", "level2": {"S1": true}})",
        R"({"level1": "informative", "justification": 12})",
        R"({"level1": "informative", "level3": {"T1": "very"}})",
        R"({"level1": "informative", "level3": {"E9": "compliance"}})",
        "[\"level1\", \"informative\"]",
    };
}

TempDir::TempDir(const std::string& prefix)
{
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    m_path = fs::temp_directory_path() /
             (prefix + "-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(m_path);
}

TempDir::~TempDir()
{
    std::error_code ec;
    fs::remove_all(m_path, ec);
}

}  // namespace regrel::testing
