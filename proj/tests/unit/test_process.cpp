#include <doctest.h>

#include "fixtures.hpp"
#include "regrel/error.hpp"
#include "regrel/process.hpp"

using namespace regrel;
using regrel::testing::small_model;

namespace {

json base_source()
{
    return to_json(small_model());
}

json& node(json& source, const std::string& id)
{
    for (auto& n : source["nodes"]) {
        if (n["node_id"] == id) {
            return n;
        }
    }
    throw std::runtime_error("no node " + id);
}

constexpr const char* kBpmn = R"(<?xml version="1.0" encoding="UTF-8"?>
<bpmn:definitions xmlns:bpmn="http://www.omg.org/spec/BPMN/20100524/MODEL" id="defs">
  <bpmn:process id="claims" name="Claims handling">
    <bpmn:startEvent id="start"/>
    <bpmn:subProcess id="intake" name="Intake">
      <bpmn:userTask id="register" name="Register   claim"/>
      <bpmn:intermediateCatchEvent id="wait" name="Wait for documents"/>
      <bpmn:subProcess id="nested" name="Nested checks">
        <bpmn:serviceTask id="check" name="Check coverage"/>
      </bpmn:subProcess>
      <bpmn:endEvent id="done" name="Intake done"/>
    </bpmn:subProcess>
    <bpmn:exclusiveGateway id="gw"/>
    <bpmn:task id="archive" name="Archive file"/>
    <bpmn:sequenceFlow id="f1" sourceRef="start" targetRef="intake"/>
  </bpmn:process>
</bpmn:definitions>)";

}  // namespace

TEST_SUITE("process")
{
    TEST_CASE("a well-formed model loads and answers structural queries")
    {
        auto model = small_model();
        CHECK(model.count(Level::process) == 1);
        CHECK(model.count(Level::subprocess) == 2);
        CHECK(model.count(Level::task) == 4);
        CHECK(model.root().node_id == "P");
        CHECK(model.children("S1").size() == 3);
        auto ancestors = model.ancestors("T1");
        REQUIRE(ancestors.size() == 2);
        CHECK(ancestors[0]->node_id == "P");
        CHECK(ancestors[1]->node_id == "S1");
        CHECK(model.at("E1").kind == NodeKind::throwing_event);
        CHECK_THROWS_AS(model.at("nope"), NotFoundError);
        CHECK(load_process(to_json(model)) == model);
    }

    TEST_CASE("structural violations name the node")
    {
        {
            auto s = base_source();
            s["nodes"].push_back(node(s, "T1"));
            CHECK_THROWS_WITH_AS(load_process(s), doctest::Contains("duplicate id 'T1'"), ValidationError);
        }
        {
            auto s = base_source();
            node(s, "T1")["parent_id"] = "S9";
            CHECK_THROWS_WITH_AS(load_process(s), doctest::Contains("orphan node 'T1'"), ValidationError);
        }
        {
            auto s = base_source();
            node(s, "T1")["parent_id"] = "P";
            CHECK_THROWS_WITH_AS(load_process(s), doctest::Contains("depth violation"), ValidationError);
        }
        {
            auto s = base_source();
            node(s, "S2")["kind"] = "task";
            CHECK_THROWS_AS(load_process(s), ValidationError);
        }
        {
            auto s = base_source();
            node(s, "T2")["description"] = " ";
            CHECK_THROWS_WITH_AS(load_process(s), doctest::Contains("T2"), ValidationError);
            s["complete"] = false;
            CHECK_NOTHROW(load_process(s));
        }
        {
            auto s = base_source();
            s["context"]["location"] = "";
            CHECK_THROWS_AS(load_process(s), ValidationError);
        }
        {
            auto s = base_source();
            node(s, "T3").erase("level");
            CHECK_THROWS_WITH_AS(load_process(s), doctest::Contains("has no level"), ValidationError);
        }
        {
            auto s = base_source();
            s["nodes"].push_back({{"node_id", "P2"}, {"level", 1}, {"name", "x"}, {"description", "y"},
                                  {"kind", "process"}});
            CHECK_THROWS_AS(load_process(s), ValidationError);
        }
    }

    TEST_CASE("BPMN extraction keeps tasks and throwing events")
    {
        auto model = extract_bpmn_skeleton(kBpmn);
        CHECK_FALSE(model.complete);
        CHECK(model.model_id == "claims");
        CHECK(model.root().name == "Claims handling");
        CHECK(model.at("intake").level == Level::subprocess);
        CHECK(model.at("register").name == "Register claim");
        CHECK(model.at("register").parent_id == std::optional<std::string>("intake"));
        // Nested sub-processes fold into the top-level one.
        CHECK(model.find("nested") == nullptr);
        CHECK(model.at("check").parent_id == std::optional<std::string>("intake"));
        CHECK(model.at("done").kind == NodeKind::throwing_event);
        CHECK(model.find("wait") == nullptr);
        CHECK(model.find("start") == nullptr);
        CHECK(model.find("gw") == nullptr);
        CHECK(model.at("archive").parent_id == std::optional<std::string>("claims"));
        CHECK(model.missing_descriptions().size() == model.nodes.size());
        REQUIRE(model.bpmn_xml.has_value());

        // The skeleton survives a save and reload before descriptions are filled in.
        auto reloaded = load_process(to_json(model));
        CHECK(reloaded.nodes == model.nodes);
        CHECK_FALSE(reloaded.complete);
    }

    TEST_CASE("malformed BPMN raises ParseError")
    {
        CHECK_THROWS_AS(extract_bpmn_skeleton("<bpmn:definitions"), ParseError);
        CHECK_THROWS_AS(extract_bpmn_skeleton("<root/>"), ParseError);
        CHECK_THROWS_AS(extract_bpmn_skeleton(
                            R"(<d xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL"><collaboration/></d>)"),
                        ParseError);
    }

    TEST_CASE("query text optionally includes ancestors")
    {
        auto model = small_model();
        CHECK(node_query_text(model, "T1") == "Record the claim in the ledger");
        CHECK(node_query_text(model, "T1", QueryVerbosity::with_ancestors) ==
              "Settle insurance claims\n\nReceive and register the claim\n\nRecord the claim in the ledger");
        CHECK(query_verbosity_from_string("with_ancestors") == QueryVerbosity::with_ancestors);
        CHECK_THROWS_AS(node_query_text(model, "X9"), NotFoundError);
    }
}
