#include <doctest.h>

#include <fstream>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "regrel/json_io.hpp"
#include "regrel/server.hpp"
#include "stubs.hpp"

using namespace regrel;
using namespace regrel::testing;

namespace {

/// A store and review server on a free local port, plus a client talking to it.
struct Service {
    TempDir dir{"regrel-server"};
    Store store{dir.path()};
    std::unique_ptr<ReviewServer> server;
    std::thread thread;
    int port = 0;
    std::unique_ptr<httplib::Client> client;

    explicit Service(ServiceProviders providers = {}, std::optional<std::filesystem::path> static_dir = std::nullopt)
    {
        server = std::make_unique<ReviewServer>(store, std::move(providers), std::move(static_dir));
        port = server->bind("127.0.0.1", 0);
        REQUIRE(port > 0);
        thread = std::thread([this] { server->serve(); });
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        client->set_read_timeout(30, 0);
        for (int i = 0; i < 200; ++i) {
            if (auto res = client->Get("/api/health"); res && res->status == 200) {
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }

    ~Service()
    {
        server->stop();
        thread.join();
    }

    std::pair<int, json> post(const std::string& path, const json& body, const httplib::Headers& headers = {})
    {
        auto res = client->Post(path, headers, body.dump(), "application/json");
        REQUIRE(res);
        return {res->status, res->body.empty() ? json() : json::parse(res->body)};
    }

    std::pair<int, json> get(const std::string& path)
    {
        auto res = client->Get(path);
        REQUIRE(res);
        return {res->status, json::parse(res->body)};
    }

    /// Uploads the banking use case and its gold through the API.
    void upload(const SyntheticUseCase& uc)
    {
        CHECK(post("/api/documents", json(uc.documents)).first == 201);
        CHECK(post("/api/processes", uc.process).first == 201);
        CHECK(post("/api/sets", {{"set_id", uc.shape.id}, {"paragraphs", uc.study_set}}).first == 201);
        auto res = client->Post("/api/gold/import?model_id=" + uc.process["model_id"].get<std::string>(),
                                to_jsonl(uc.gold), "application/x-ndjson");
        REQUIRE(res);
        CHECK(res->status == 200);
    }
};

}  // namespace

TEST_SUITE("server")
{
    TEST_CASE("rank run, enqueue, review and report over HTTP")
    {
        Service svc;
        auto uc = make_use_case(banking_shape());
        const auto model_id = uc.process["model_id"].get<std::string>();
        svc.upload(uc);

        auto [status, started] = svc.post("/api/runs/rank", {{"set_id", "uc2"}, {"model_id", model_id}, {"level", 3}});
        CHECK(status == 202);
        const auto run_id = started["run_id"].get<std::string>();
        svc.server->wait_for_jobs();

        auto [run_status, run] = svc.get("/api/runs/" + run_id);
        CHECK(run_status == 200);
        CHECK(run["status"] == "done");
        CHECK(run["ranking_count"] == 19);
        CHECK_FALSE(run.contains("rankings"));
        CHECK(svc.get("/api/runs/" + run_id + "?full=1").second["rankings"].size() == 19);

        auto [enq_status, enqueued] = svc.post("/api/runs/" + run_id + "/enqueue", {{"top_k", 2}});
        CHECK(enq_status == 200);
        CHECK(enqueued["created"] == 38);
        CHECK(svc.post("/api/runs/" + run_id + "/enqueue", {{"top_k", 2}}).second["created"] == 0);

        auto [q_status, queue] = svc.get("/api/queue?page_size=10&page=2");
        CHECK(q_status == 200);
        CHECK(queue["total"] == 38);
        CHECK(queue["pages"] == 4);
        CHECK(queue["items"].size() == 10);
        CHECK(queue["progress"]["pending"] == 38);
        const auto& first = queue["items"][0];
        CHECK(first["paragraph"]["document"]["doc_id"].is_string());
        CHECK_FALSE(first["paragraph"].contains("group"));
        CHECK(first["node"]["ancestors"].size() == 2);
        auto all = svc.get("/api/queue?page_size=500").second["items"];
        for (std::size_t i = 1; i < all.size(); ++i) {
            CHECK(all[i - 1]["machine_score"].get<double>() >= all[i]["machine_score"].get<double>());
        }

        const auto item = all[0]["item_id"].get<std::string>();
        auto [d_status, decided] =
            svc.post("/api/items/" + item + "/decision", {{"action", "confirm"}, {"type", "compliance"}, {"reviewer", "r"}},
                     {{"Idempotency-Key", "abc"}});
        CHECK(d_status == 200);
        CHECK(decided["item"]["status"] == "confirmed");
        auto replay = svc.post("/api/items/" + item + "/decision", {{"action", "reject"}}, {{"Idempotency-Key", "abc"}});
        CHECK(replay.first == 200);
        CHECK(replay.second == decided);
        auto conflict = svc.post("/api/items/" + item + "/decision", {{"action", "reject"}});
        CHECK(conflict.first == 409);
        CHECK(conflict.second["current"]["status"] == "confirmed");

        CHECK(svc.get("/api/queue?status=confirmed").second["total"] == 1);
        CHECK(svc.get("/api/queue").second["progress"]["decided"] == 1);
        CHECK(svc.get("/api/items/" + item).second["status"] == "confirmed");

        auto [r_status, report] = svc.get("/api/reports/" + run_id);
        CHECK(r_status == 200);
        CHECK(report["levels"]["3"]["tp"].get<int>() >= 0);
        CHECK(report["method"] == "A_bm25_ce");

        auto exported = svc.client->Get("/api/gold/export");
        REQUIRE(exported);
        CHECK(exported->get_header_value("Content-Type") == "application/x-ndjson");
        CHECK(parse_jsonl(exported->body, "export").size() == 311);
    }

    TEST_CASE("errors map onto HTTP statuses")
    {
        Service svc;
        CHECK(svc.get("/api/items/it-000001").first == 404);
        CHECK(svc.get("/api/runs/run-0001").first == 404);
        CHECK(svc.get("/api/process/nope").first == 404);
        CHECK(svc.get("/api/queue?status=bogus").first == 400);
        CHECK(svc.get("/api/queue?page=x").first == 400);
        auto res = svc.client->Post("/api/processes", "{not json", "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK(svc.post("/api/processes", {{"model_id", "m"}}).first == 400);
        CHECK(svc.post("/api/runs/rank", {{"set_id", "s"}}).first == 400);
        CHECK(svc.post("/api/runs/rank", {{"set_id", "s"}, {"model_id", "m"}}).first == 404);
        CHECK(svc.post("/api/runs/judge", {{"set_id", "s"}, {"model_id", "m"}}).first == 503);
        CHECK(svc.get("/api/gold/export").first == 400);
    }

    TEST_CASE("concurrent decisions on one item: exactly one wins")
    {
        Service svc;
        auto uc = make_use_case(banking_shape());
        svc.upload(uc);
        auto started = svc.post("/api/runs/rank", {{"set_id", "uc2"}, {"model_id", "uc2-process"}, {"node_ids", {"uc2-P"}}});
        svc.server->wait_for_jobs();
        svc.post("/api/runs/" + started.second["run_id"].get<std::string>() + "/enqueue", {{"top_k", 1}});
        const auto item = svc.get("/api/queue").second["items"][0]["item_id"].get<std::string>();

        std::atomic<int> ok{0};
        std::atomic<int> conflicts{0};
        std::vector<std::thread> threads;
        for (int t = 0; t < 8; ++t) {
            threads.emplace_back([&, t] {
                httplib::Client client("127.0.0.1", svc.port);
                auto res = client.Post("/api/items/" + item + "/decision",
                                       json{{"action", t % 2 == 0 ? "reject" : "confirm"}, {"type", "informative"}}.dump(),
                                       "application/json");
                if (res && res->status == 200) {
                    ++ok;
                } else if (res && res->status == 409) {
                    ++conflicts;
                }
            });
        }
        for (auto& t : threads) {
            t.join();
        }
        CHECK(ok == 1);
        CHECK(conflicts == 7);
        CHECK(svc.get("/api/queue?status=all").second["progress"]["decided"] == 1);
    }

    TEST_CASE("judge runs go through the chat provider")
    {
        auto chat = std::make_shared<StubChatProvider>([](const std::vector<ChatMessage>& messages) {
            const auto& text = messages[0].content;
            if (text.find("The undertaking must") != std::string::npos) {
                return std::string(R"({"level1": "compliance", "justification": "duty"})");
            }
            return irrelevant_reply();
        });
        Service svc(ServiceProviders{{}, chat});
        auto uc = make_use_case(banking_shape());
        svc.upload(uc);
        auto [status, started] =
            svc.post("/api/runs/judge", {{"set_id", "uc2"}, {"model_id", "uc2-process"}, {"iteration", "v2"}});
        CHECK(status == 202);
        svc.server->wait_for_jobs();
        CHECK(chat->requests() == 311);
        const auto run_id = started["run_id"].get<std::string>();
        auto run = svc.get("/api/runs/" + run_id).second;
        CHECK(run["status"] == "done");
        CHECK(run["judgment_count"] == 311);
        CHECK(run["config"]["iteration"] == "v2");
        auto enq = svc.post("/api/runs/" + run_id + "/enqueue", json::object()).second;
        CHECK(enq["created"] == 24);
        auto item = enq["items"][0];
        CHECK(item["machine_label"] == "compliance");
        CHECK(item["method"] == "llm_v2");
        CHECK(svc.get("/api/reports/" + run_id).second["levels"]["1"]["tp"] == 24);
    }

    TEST_CASE("static files are served next to the API")
    {
        TempDir site("regrel-site");
        {
            std::ofstream out(site / "index.html");
            out << "<html>review</html>";
        }
        Service svc({}, site.path());
        auto res = svc.client->Get("/index.html");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->body == "<html>review</html>");
        CHECK(svc.get("/api/health").second["status"] == "ok");
    }
}
