#include <synrev/error.hpp>
#include <synrev/prompts.hpp>
#include <synrev/util.hpp>

#include <algorithm>

namespace synrev::prompts {

std::string_view to_string(Strategy s)
{
    switch (s) {
    case Strategy::ZeroShot: return "zero_shot";
    case Strategy::ChainOfThought: return "chain_of_thought";
    case Strategy::SelfReflection: return "self_reflection";
    }
    return "zero_shot";
}

Strategy strategy_from_string(std::string_view s)
{
    for (auto st : list_strategies())
        if (to_string(st) == s)
            return st;
    throw Error(ErrorCode::ConfigError, "unknown strategy '" + std::string(s) + "'");
}

std::vector<Strategy> list_strategies()
{
    return {Strategy::ZeroShot, Strategy::ChainOfThought, Strategy::SelfReflection};
}

namespace {

constexpr std::string_view kTurnSeparator = "\n=== turn ===\n";

enum class Placeholder { Diff, Message, PriorResponse };

struct Piece {
    bool literal = true;
    std::string_view text;  // literal text, or the placeholder name
    Placeholder which = Placeholder::Diff;
};

bool is_name_char(char c)
{
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

// Splits a template turn into literal runs and {{Name}} placeholders. A "{{" that
// is not followed by a name and "}}" stays literal.
std::vector<Piece> scan(std::string_view turn)
{
    std::vector<Piece> pieces;
    std::size_t lit_start = 0;
    std::size_t i = 0;
    while ((i = turn.find("{{", i)) != std::string_view::npos) {
        std::size_t j = i + 2;
        while (j < turn.size() && is_name_char(turn[j]))
            ++j;
        if (j == i + 2 || turn.substr(j, 2) != "}}") {
            i += 2;
            continue;
        }
        auto name = turn.substr(i + 2, j - i - 2);
        Piece p{false, name, Placeholder::Diff};
        if (name == "Diff")
            p.which = Placeholder::Diff;
        else if (name == "Message")
            p.which = Placeholder::Message;
        else if (name == "PriorResponse")
            p.which = Placeholder::PriorResponse;
        else
            throw Error(ErrorCode::UnknownPlaceholder, "unknown placeholder {{" + std::string(name) + "}}");
        if (i > lit_start)
            pieces.push_back({true, turn.substr(lit_start, i - lit_start)});
        pieces.push_back(p);
        i = j + 2;
        lit_start = i;
    }
    if (lit_start < turn.size())
        pieces.push_back({true, turn.substr(lit_start)});
    return pieces;
}

bool has_placeholder(std::string_view turn, Placeholder which)
{
    auto pieces = scan(turn);
    return std::any_of(pieces.begin(), pieces.end(), [&](const Piece& p) { return !p.literal && p.which == which; });
}

} // namespace

void PromptTemplate::validate() const
{
    const std::size_t expected = strategy == Strategy::SelfReflection ? 2 : 1;
    if (turns.size() != expected)
        throw Error(ErrorCode::TemplateError, std::string(to_string(strategy)) + " template needs "
                                                  + std::to_string(expected) + " turn(s), has "
                                                  + std::to_string(turns.size()));
    for (const auto& t : turns)
        scan(t);  // rejects unknown placeholders
    if (!has_placeholder(turns[0], Placeholder::Diff) || !has_placeholder(turns[0], Placeholder::Message))
        throw Error(ErrorCode::TemplateError, "turn 1 must contain {{Diff}} and {{Message}}");
    if (has_placeholder(turns[0], Placeholder::PriorResponse))
        throw Error(ErrorCode::TemplateError, "turn 1 cannot reference {{PriorResponse}}");
    if (strategy == Strategy::SelfReflection && !has_placeholder(turns[1], Placeholder::PriorResponse))
        throw Error(ErrorCode::TemplateError, "self_reflection turn 2 must contain {{PriorResponse}}");
    if (version.empty())
        throw Error(ErrorCode::TemplateError, "template version is empty");
}

std::string PromptTemplate::template_version() const
{
    return version + "+" + sha256_hex(serialize_template(*this)).substr(0, 12);
}

PromptTemplate parse_template(std::string_view text)
{
    auto fail = [](const std::string& why) -> PromptTemplate {
        throw Error(ErrorCode::TemplateError, why);
    };
    if (text.substr(0, 4) != "---\n")
        return fail("template must start with a '---' front-matter line");
    auto end = text.find("\n---\n", 3);
    if (end == std::string_view::npos)
        return fail("unterminated front matter");

    PromptTemplate t;
    bool have_strategy = false;
    for (const auto& raw : split(text.substr(4, end - 4), '\n')) {
        auto line = trim(raw);
        if (line.empty())
            continue;
        auto colon = line.find(':');
        if (colon == std::string::npos)
            return fail("bad front-matter line '" + line + "'");
        auto key = trim(std::string_view(line).substr(0, colon));
        auto value = trim(std::string_view(line).substr(colon + 1));
        if (key == "strategy") {
            t.strategy = strategy_from_string(value);
            have_strategy = true;
        } else if (key == "version") {
            t.version = value;
        } else {
            return fail("unknown front-matter key '" + key + "'");
        }
    }
    if (!have_strategy)
        return fail("front matter lacks 'strategy'");

    std::string_view body = text.substr(end + 5);
    if (!body.empty() && body.back() == '\n')
        body.remove_suffix(1);
    std::size_t pos = 0;
    while (true) {
        auto sep = body.find(kTurnSeparator, pos);
        if (sep == std::string_view::npos) {
            t.turns.emplace_back(body.substr(pos));
            break;
        }
        t.turns.emplace_back(body.substr(pos, sep - pos));
        pos = sep + kTurnSeparator.size();
    }
    t.validate();
    return t;
}

std::string serialize_template(const PromptTemplate& t)
{
    std::string out = "---\nstrategy: " + std::string(to_string(t.strategy)) + "\nversion: " + t.version + "\n---\n";
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        if (i > 0)
            out += kTurnSeparator;
        out += t.turns[i];
    }
    out += "\n";
    return out;
}

PromptTemplate builtin_template(Strategy s)
{
    PromptTemplate t;
    t.strategy = s;
    t.version = "1";
    switch (s) {
    case Strategy::ZeroShot:
        t.turns = {std::string(kZeroShotPrompt)};
        break;
    case Strategy::ChainOfThought:
        t.turns = {
            "Given this diff hunk \"{{Diff}}\" and this commit message \"{{Message}}\" belonging to a commit that "
            "addresses a vulnerability. Think step by step before answering:\n"
            "1. Describe what the code did before the commit and what the commit changed.\n"
            "2. Identify the vulnerability the change removes and how it could have been exploited.\n"
            "3. Decide what a reviewer looking at the vulnerable version would have pointed out.\n"
            "Then generate a code review that could have led to making said commit in the first place. Write it "
            "like a reviewer who found a vulnerability on the code. Put the review after a line that contains only "
            "\"Final review:\"."};
        break;
    case Strategy::SelfReflection:
        t.turns = {std::string(kZeroShotPrompt),
                   "Here is the code review you wrote: \"{{PriorResponse}}\". Evaluate it critically: is it "
                   "coherent, does it address the vulnerability fixed by the commit, and could it plausibly have "
                   "prompted the commit? Then write an improved version of the review. Reply with the improved "
                   "review only."};
        break;
    }
    return t;
}

TemplateSet::TemplateSet()
{
    reload();
}

TemplateSet::TemplateSet(std::filesystem::path dir) : dir_(std::move(dir))
{
    reload();
}

void TemplateSet::reload()
{
    std::map<Strategy, PromptTemplate> fresh;
    for (auto s : list_strategies())
        fresh[s] = builtin_template(s);
    if (dir_) {
        if (!std::filesystem::is_directory(*dir_))
            throw Error(ErrorCode::ConfigError, "templates dir " + dir_->string() + " does not exist");
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(*dir_))
            if (entry.is_regular_file() && entry.path().extension() == ".tmpl")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        std::map<Strategy, std::filesystem::path> seen;
        for (const auto& f : files) {
            auto t = parse_template(read_file(f));
            if (auto it = seen.find(t.strategy); it != seen.end())
                throw Error(ErrorCode::TemplateError, "both " + it->second.string() + " and " + f.string()
                                                          + " define " + std::string(to_string(t.strategy)));
            seen[t.strategy] = f;
            fresh[t.strategy] = std::move(t);
        }
    }
    templates_ = std::move(fresh);
}

const PromptTemplate& TemplateSet::get(Strategy s) const
{
    return templates_.at(s);
}

std::string render_turn(const PromptTemplate& t, std::size_t turn, std::string_view diff, std::string_view message,
                        std::optional<std::string_view> prior_response)
{
    if (turn >= t.turns.size())
        throw Error(ErrorCode::TemplateError, "template has no turn " + std::to_string(turn + 1));
    std::string out;
    for (const auto& p : scan(t.turns[turn])) {
        if (p.literal) {
            out += p.text;
            continue;
        }
        switch (p.which) {
        case Placeholder::Diff:
            if (diff.empty())
                throw Error(ErrorCode::MissingPlaceholderValue, "{{Diff}} value is empty");
            out += diff;
            break;
        case Placeholder::Message:
            if (message.empty())
                throw Error(ErrorCode::MissingPlaceholderValue, "{{Message}} value is empty");
            out += message;
            break;
        case Placeholder::PriorResponse:
            if (!prior_response)
                throw Error(ErrorCode::MissingPlaceholderValue,
                            "turn " + std::to_string(turn + 1) + " needs {{PriorResponse}}");
            out += *prior_response;
            break;
        }
    }
    return out;
}

std::vector<std::string> render(const PromptTemplate& t, std::string_view diff, std::string_view message,
                                std::optional<std::string_view> prior_response)
{
    if (diff.empty() || message.empty())
        throw Error(ErrorCode::MissingPlaceholderValue, "diff and message must be non-empty");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        if (!prior_response && has_placeholder(t.turns[i], Placeholder::PriorResponse))
            break;
        out.push_back(render_turn(t, i, diff, message, prior_response));
    }
    return out;
}

bool PlannedTurn::needs_prior() const
{
    return std::any_of(segments.begin(), segments.end(), [](const Segment& s) { return s.prior_slot; });
}

std::string PlannedTurn::render(std::optional<std::string_view> prior_response) const
{
    std::string out;
    for (const auto& s : segments) {
        if (!s.prior_slot) {
            out += s.text;
        } else if (prior_response) {
            out += *prior_response;
        } else {
            throw Error(ErrorCode::MissingPlaceholderValue, "turn needs {{PriorResponse}}");
        }
    }
    return out;
}

std::string PromptPlan::hash() const
{
    Sha256 h;
    h.field("synrev-prompt-plan-v1");
    h.field(std::to_string(turns.size()));
    for (const auto& t : turns) {
        h.field(std::to_string(t.segments.size()));
        for (const auto& s : t.segments) {
            h.field(s.prior_slot ? "slot" : "text");
            h.field(s.text);
        }
    }
    return h.hex_digest();
}

std::size_t PromptPlan::size_chars() const
{
    std::size_t n = 0;
    for (const auto& t : turns)
        for (const auto& s : t.segments)
            n += s.text.size();
    return n;
}

PromptPlan PromptPlan::from_texts(const std::vector<std::string>& texts)
{
    PromptPlan p;
    for (const auto& t : texts)
        p.turns.push_back(PlannedTurn{{{false, t}}});
    return p;
}

PromptPlan plan(const PromptTemplate& t, std::string_view diff, std::string_view message)
{
    if (diff.empty() || message.empty())
        throw Error(ErrorCode::MissingPlaceholderValue, "diff and message must be non-empty");
    PromptPlan out;
    for (const auto& turn : t.turns) {
        PlannedTurn pt;
        std::string lit;
        for (const auto& p : scan(turn)) {
            if (p.literal) {
                lit += p.text;
            } else if (p.which == Placeholder::Diff) {
                lit += diff;
            } else if (p.which == Placeholder::Message) {
                lit += message;
            } else {
                if (!lit.empty())
                    pt.segments.push_back({false, std::move(lit)});
                lit.clear();
                pt.segments.push_back({true, {}});
            }
        }
        if (!lit.empty())
            pt.segments.push_back({false, std::move(lit)});
        out.turns.push_back(std::move(pt));
    }
    return out;
}

std::string extract_final_review(std::string_view response)
{
    constexpr std::string_view kMarker = "final review:";
    std::size_t best = std::string_view::npos;
    std::size_t pos = 0;
    for (const auto& line : split(response, '\n')) {
        auto lowered = to_lower_ascii(line);
        auto k = lowered.find(kMarker);
        // Only a marker that opens the line, optionally after markdown emphasis or heading marks.
        if (k != std::string::npos
            && lowered.find_first_not_of(" \t*#", 0) == k) {
            auto after = k + kMarker.size();
            while (after < line.size() && line[after] == '*')
                ++after;
            best = pos + after;
        }
        pos += line.size() + 1;
    }
    if (best == std::string_view::npos)
        return trim(response);
    auto review = trim(response.substr(std::min(best, response.size())));
    return review.empty() ? trim(response) : review;
}

} // namespace synrev::prompts
