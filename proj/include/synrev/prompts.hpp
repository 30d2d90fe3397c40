#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace synrev::prompts {

enum class Strategy { ZeroShot, ChainOfThought, SelfReflection };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

/// The three strategies in their stable order.
std::vector<Strategy> list_strategies();

inline constexpr std::string_view kDiff = "{{Diff}}";
inline constexpr std::string_view kMessage = "{{Message}}";
inline constexpr std::string_view kPriorResponse = "{{PriorResponse}}";

/// The published zero-shot instruction, byte for byte.
inline constexpr std::string_view kZeroShotPrompt =
    "Given this diff hunk \"{{Diff}}\" and this commit message \"{{Message}}\" belonging to a commit that "
    "addresses a vulnerability. Generate a code review that could have led to making said commit in the first "
    "place. Write it like a reviewer who found a vulnerability on the code.";

struct PromptTemplate {
    Strategy strategy = Strategy::ZeroShot;
    std::vector<std::string> turns;
    std::string version;

    /// Throws TemplateError / UnknownPlaceholder when the turn structure is wrong.
    void validate() const;

    /// Declared version plus a content hash prefix, e.g. "1+3fa2c0d18e4b".
    /// Any byte change to the template changes it.
    std::string template_version() const;
};

/// Front-matter file format:
///   ---
///   strategy: zero_shot
///   version: 1
///   ---
///   <turn 1>
///   === turn ===
///   <turn 2>
PromptTemplate parse_template(std::string_view file_text);
std::string serialize_template(const PromptTemplate& t);

PromptTemplate builtin_template(Strategy s);

/// Templates keyed by strategy. Files in the directory override the built-ins;
/// reload() picks up edits without restarting.
class TemplateSet {
public:
    TemplateSet();
    explicit TemplateSet(std::filesystem::path dir);

    void reload();
    const PromptTemplate& get(Strategy s) const;

private:
    std::optional<std::filesystem::path> dir_;
    std::map<Strategy, PromptTemplate> templates_;
};

/// Renders each turn with literal substitution, stopping before the first turn
/// that needs a prior response when none is supplied.
std::vector<std::string> render(const PromptTemplate& t, std::string_view diff, std::string_view message,
                                std::optional<std::string_view> prior_response = std::nullopt);

/// Renders one turn. Throws MissingPlaceholderValue when the turn needs a value
/// that is absent or empty.
std::string render_turn(const PromptTemplate& t, std::size_t turn, std::string_view diff, std::string_view message,
                        std::optional<std::string_view> prior_response = std::nullopt);

/// A turn with the diff and message already bound and the prior-response slot
/// left open, so a multi-turn conversation can be hashed before it is sent.
struct PlannedTurn {
    struct Segment {
        bool prior_slot = false;
        std::string text;
    };
    std::vector<Segment> segments;

    bool needs_prior() const;
    std::string render(std::optional<std::string_view> prior_response) const;
};

struct PromptPlan {
    std::vector<PlannedTurn> turns;

    /// SHA-256 over the turn structure; deterministic, 64 hex chars.
    std::string hash() const;
    std::size_t size_chars() const;

    static PromptPlan from_texts(const std::vector<std::string>& texts);
};

PromptPlan plan(const PromptTemplate& t, std::string_view diff, std::string_view message);

/// The review part of a response: text after the last "Final review:" line when
/// present, else the whole response, trimmed.
std::string extract_final_review(std::string_view response);

} // namespace synrev::prompts
