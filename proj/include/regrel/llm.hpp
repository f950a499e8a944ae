#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regrel/corpus.hpp"
#include "regrel/evaluation.hpp"
#include "regrel/http_client.hpp"
#include "regrel/process.hpp"

namespace regrel {

// ---------------------------------------------------------------------------
// Prompt construction

enum class PromptIteration { v1, v2, v3 };

std::string_view to_string(PromptIteration iteration);
PromptIteration prompt_iteration_from_string(std::string_view text);

/// Instruction added from the second iteration on.
inline constexpr std::string_view kClearRelationInstruction =
    "Only match clear relations between the regulatory text and the business process. "
    "Do not mark a text as relevant when the connection is vague or merely thematic.";

/// Instruction added in the third iteration.
inline constexpr std::string_view kRecallPriorityInstruction =
    "Recall is the most important measurement for this task: missing a relevant regulatory text is worse "
    "than flagging one that turns out to be irrelevant.";

struct PromptBundle {
    std::string para_id;
    PromptIteration iteration = PromptIteration::v3;
    std::string task_block;
    std::string business_block;
    std::string regulation_block;
    std::string rendered;
    std::size_t word_count = 0;
    std::vector<std::string> warnings;
};

/// The task block depends only on the iteration, the business block only on
/// the model, and the regulation block on the paragraph and its document.
/// Throws ValidationError listing the nodes that still lack a description.
PromptBundle build_prompt(const ProcessModel& model, const Paragraph& para, const RegulatoryDocument& doc,
                          PromptIteration iteration);

std::string build_task_block(PromptIteration iteration);
std::string build_business_block(const ProcessModel& model);
std::string build_regulation_block(const Paragraph& para, const RegulatoryDocument& doc, PromptIteration iteration);

/// Document metadata to use when a paragraph's document is not registered.
RegulatoryDocument placeholder_document(const Paragraph& para);

// ---------------------------------------------------------------------------
// Replies

struct LlmJudgment {
    std::string para_id;
    LabelSet labels;
    std::string justification;
    std::string raw_reply;
    std::vector<std::string> warnings;

    bool operator==(const LlmJudgment&) const = default;
};

enum class ClosureMode {
    /// Reject replies that break propagation closure.
    strict,
    /// Close them upward and record a warning.
    lenient,
};

/// Parses the first JSON object in `raw`. Throws ParseError (carrying `raw`) on
/// malformed JSON, missing or mistyped keys, unknown or misplaced node ids, and
/// in strict mode on a "propagation violation".
LlmJudgment parse_reply(std::string_view raw, const ProcessModel& model, std::string para_id,
                        ClosureMode mode = ClosureMode::lenient);

/// The judgment in the reply schema, so parse_reply(to_reply_json(j)) reproduces j.
json to_reply_json(const LlmJudgment& judgment);

json to_json(const LlmJudgment& judgment);
LlmJudgment judgment_from_json(const json& j);

/// Clears every label when `threshold` or more sub-processes were marked relevant.
/// Returns true when the judgment was changed.
bool apply_subprocess_post_filter(LlmJudgment& judgment, std::size_t threshold);

// ---------------------------------------------------------------------------
// Providers and runs

struct ChatMessage {
    std::string role;
    std::string content;
};

class ChatProvider {
  public:
    virtual ~ChatProvider() = default;
    /// One completion request. Transport failures surface as TransportError.
    virtual std::string complete(const std::vector<ChatMessage>& messages, double temperature) const = 0;
    virtual std::string tag() const = 0;
};

/// `POST /chat {messages, temperature}` -> `{content}`.
class RemoteChatProvider final : public ChatProvider {
  public:
    explicit RemoteChatProvider(HttpEndpoint endpoint);

    std::string complete(const std::vector<ChatMessage>& messages, double temperature) const override;
    std::string tag() const override;

  private:
    HttpEndpoint m_endpoint;
};

struct JudgeConfig {
    PromptIteration iteration = PromptIteration::v3;
    double temperature = 0.0;
    ClosureMode closure = ClosureMode::lenient;
    std::size_t in_flight = 4;
    std::optional<std::size_t> subprocess_post_filter;  // off by default
};

/// Zero-shot: exactly one completion request, whose first reply is parsed.
LlmJudgment judge(const ChatProvider& provider, const PromptBundle& bundle, const ProcessModel& model,
                  const JudgeConfig& config = {});

struct JudgeFailure {
    std::string para_id;
    std::string kind;  // "transport" or "parse"
    std::string message;
    std::string raw_reply;
};

struct JudgeRun {
    std::vector<LlmJudgment> judgments;  // study-set order
    std::vector<JudgeFailure> failures;
};

/// Judges every paragraph of the set once. `documents` maps doc_id to metadata;
/// paragraphs of unregistered documents get placeholder metadata.
JudgeRun judge_study_set(const ChatProvider& provider, const StudySet& set, const ProcessModel& model,
                         const std::map<std::string, RegulatoryDocument>& documents, const JudgeConfig& config = {});

PredictionRecord to_prediction(const LlmJudgment& judgment, std::string method, std::string config_digest);

std::string config_digest(const JudgeConfig& config);

}  // namespace regrel
