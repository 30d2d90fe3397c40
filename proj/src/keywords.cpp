#include <synrev/error.hpp>
#include <synrev/keywords.hpp>
#include <synrev/util.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace synrev::keywords {

std::string_view to_string(Origin o)
{
    switch (o) {
    case Origin::SeedList: return "seed_list";
    case Origin::ProposedIter1: return "proposed_iter1";
    case Origin::ProposedIter2: return "proposed_iter2";
    }
    return "seed_list";
}

std::string_view to_string(Status s)
{
    switch (s) {
    case Status::Candidate: return "candidate";
    case Status::Retained: return "retained";
    case Status::Dropped: return "dropped";
    }
    return "candidate";
}

namespace {

Origin origin_from(std::string_view s)
{
    if (s == "seed_list")
        return Origin::SeedList;
    if (s == "proposed_iter1")
        return Origin::ProposedIter1;
    if (s == "proposed_iter2")
        return Origin::ProposedIter2;
    throw Error(ErrorCode::SchemaError, "unknown keyword origin '" + std::string(s) + "'");
}

Status status_from(std::string_view s)
{
    if (s == "candidate")
        return Status::Candidate;
    if (s == "retained")
        return Status::Retained;
    if (s == "dropped")
        return Status::Dropped;
    throw Error(ErrorCode::SchemaError, "unknown keyword status '" + std::string(s) + "'");
}

inline bool is_word_byte(unsigned char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::string normalize_keyword(std::string_view s)
{
    return to_lower_ascii(trim(s));
}

} // namespace

std::vector<std::string> tokenize_words(std::string_view text)
{
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i])))
            ++i;
        std::size_t start = i;
        while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i])))
            ++i;
        if (i > start)
            tokens.push_back(to_lower_ascii(text.substr(start, i - start)));
    }
    return tokens;
}

Matcher::Matcher(std::span<const std::string> keywords)
{
    for (const auto& k : keywords)
        add(k);
}

Matcher::Matcher(std::span<const KeywordEntry> keywords)
{
    for (const auto& k : keywords)
        add(k.text);
}

void Matcher::add(const std::string& keyword)
{
    auto tokens = tokenize_words(keyword);
    if (tokens.empty())
        return;
    auto idx = keywords_.size();
    keywords_.push_back(keyword);
    by_first_token_[tokens.front()].push_back(idx);
    token_seqs_.push_back(std::move(tokens));
}

std::vector<std::string> Matcher::match(std::string_view message) const
{
    std::vector<std::string> hits;
    if (keywords_.empty())
        return hits;
    auto tokens = tokenize_words(message);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto it = by_first_token_.find(tokens[i]);
        if (it == by_first_token_.end())
            continue;
        for (auto idx : it->second) {
            const auto& seq = token_seqs_[idx];
            if (i + seq.size() > tokens.size())
                continue;
            if (std::equal(seq.begin(), seq.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i)))
                hits.push_back(keywords_[idx]);
        }
    }
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    return hits;
}

bool Matcher::any(std::string_view message) const
{
    return !match(message).empty();
}

std::set<std::string> match_keywords(std::string_view message, std::span<const KeywordEntry> keywords)
{
    auto hits = Matcher(keywords).match(message);
    return {hits.begin(), hits.end()};
}

namespace {

// Acklam's rational approximation of the normal quantile.
double inverse_normal_cdf(double p)
{
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
          / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= 1 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
          / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
          / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    // One Halley step brings the approximation to full double precision.
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
    return x - u / (1 + x * u / 2);
}

} // namespace

double z_for_confidence(double confidence)
{
    if (!(confidence > 0.0 && confidence < 1.0))
        throw Error(ErrorCode::DomainError, "confidence must be in (0,1)");
    double z = inverse_normal_cdf(1.0 - (1.0 - confidence) / 2.0);
    return std::round(z * 1e6) / 1e6;
}

std::uint64_t required_sample_size(std::uint64_t population, double confidence, double margin)
{
    if (population < 1)
        throw Error(ErrorCode::DomainError, "population must be >= 1");
    if (!(margin > 0.0 && margin < 1.0))
        throw Error(ErrorCode::DomainError, "margin must be in (0,1)");
    const double z = z_for_confidence(confidence);
    const double n0 = z * z * 0.25 / (margin * margin);
    const double n = std::ceil(n0 / (1.0 + (n0 - 1.0) / static_cast<double>(population)));
    auto size = static_cast<std::uint64_t>(std::max(1.0, n));
    return std::min(size, population);
}

SamplePlan SamplePlan::make(std::uint64_t population, std::uint64_t seed, double confidence, double margin)
{
    SamplePlan plan;
    plan.population_size = population;
    plan.confidence = confidence;
    plan.margin = margin;
    plan.seed = seed;
    plan.sample_size = required_sample_size(population, confidence, margin);
    return plan;
}

std::vector<std::string> draw_sample(std::span<const std::string> population_ids, const SamplePlan& plan)
{
    if (population_ids.size() != plan.population_size)
        throw Error(ErrorCode::DomainError, "population has " + std::to_string(population_ids.size())
                                                + " ids, plan expects " + std::to_string(plan.population_size));
    if (plan.sample_size == 0 || plan.sample_size > plan.population_size)
        throw Error(ErrorCode::DomainError, "sample size must be in [1, population]");

    std::vector<std::size_t> idx(population_ids.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    StableRng rng(plan.seed);
    // Partial Fisher-Yates: the first sample_size slots end up uniformly chosen.
    for (std::size_t i = 0; i < plan.sample_size; ++i) {
        auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(plan.sample_size);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (auto i : idx)
        out.push_back(population_ids[i]);
    return out;
}

KeywordEntry update_precision(KeywordEntry keyword, std::span<const bool> labels, double threshold)
{
    keyword.stats.labeled += labels.size();
    keyword.stats.true_positive += static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), true));
    auto precision = keyword.stats.precision();
    if (!precision)
        throw Error(ErrorCode::NoLabels, "keyword '" + keyword.text + "' has no labels");
    keyword.status = *precision > threshold ? Status::Retained : Status::Dropped;
    return keyword;
}

RefinementState RefinementState::from_seed(std::span<const std::string> seed_keywords, std::string version,
                                           double threshold)
{
    RefinementState state;
    state.threshold = threshold;
    state.seed_list_version = std::move(version);
    std::set<std::string> seen;
    for (const auto& k : seed_keywords) {
        auto text = normalize_keyword(k);
        if (text.empty() || !seen.insert(text).second)
            continue;
        state.entries.push_back({text, Origin::SeedList, Status::Candidate, {}});
    }
    return state;
}

std::vector<std::string> RefinementState::retained() const
{
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (e.status == Status::Retained)
            out.push_back(e.text);
    return out;
}

std::vector<std::string> RefinementState::active() const
{
    if (terminal())
        return retained();
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (e.status != Status::Dropped)
            out.push_back(e.text);
    return out;
}

const KeywordEntry* RefinementState::find(std::string_view text) const
{
    for (const auto& e : entries)
        if (e.text == text)
            return &e;
    return nullptr;
}

json RefinementState::to_json() const
{
    json list = json::array();
    for (const auto& e : entries) {
        json stats = {{"labeled", e.stats.labeled}, {"true_positive", e.stats.true_positive}};
        auto p = e.stats.precision();
        stats["precision"] = p ? json(*p) : json(nullptr);
        list.push_back({{"text", e.text},
                        {"origin", std::string(to_string(e.origin))},
                        {"status", std::string(to_string(e.status))},
                        {"stats", stats}});
    }
    return json{{"completed_rounds", completed_rounds},
                {"threshold", threshold},
                {"seed_list_version", seed_list_version},
                {"entries", list}};
}

RefinementState RefinementState::from_json(const json& j)
{
    try {
        RefinementState s;
        s.completed_rounds = j.at("completed_rounds").get<int>();
        s.threshold = j.at("threshold").get<double>();
        s.seed_list_version = j.value("seed_list_version", "");
        for (const auto& e : j.at("entries")) {
            KeywordEntry k;
            k.text = e.at("text").get<std::string>();
            k.origin = origin_from(e.at("origin").get<std::string>());
            k.status = status_from(e.at("status").get<std::string>());
            k.stats.labeled = e.at("stats").at("labeled").get<std::uint64_t>();
            k.stats.true_positive = e.at("stats").at("true_positive").get<std::uint64_t>();
            s.entries.push_back(std::move(k));
        }
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("refinement state: ") + e.what());
    }
}

RefinementState refinement_round(const RefinementState& state, std::span<const LabeledCommit> labels,
                                 std::span<const std::string> proposed_keywords, int round)
{
    if (round != 1 && round != 2)
        throw Error(ErrorCode::RoundOrderViolation, "round must be 1 or 2, got " + std::to_string(round));
    if (round != state.completed_rounds + 1)
        throw Error(ErrorCode::RoundOrderViolation,
                    "round " + std::to_string(round) + " requested after " + std::to_string(state.completed_rounds)
                        + " completed round(s)");

    RefinementState next = state;
    for (auto& entry : next.entries) {
        // std::vector<bool> has no contiguous storage, so collect into a plain array.
        std::size_t n = 0;
        auto verdicts = std::make_unique<bool[]>(labels.size());
        for (const auto& item : labels)
            if (std::find(item.keywords.begin(), item.keywords.end(), entry.text) != item.keywords.end())
                verdicts[n++] = item.vulnerability;
        if (n == 0)
            continue;
        entry = update_precision(std::move(entry), std::span<const bool>(verdicts.get(), n), next.threshold);
    }

    const Origin origin = round == 1 ? Origin::ProposedIter1 : Origin::ProposedIter2;
    for (const auto& raw : proposed_keywords) {
        auto text = normalize_keyword(raw);
        if (text.empty() || tokenize_words(text).empty() || next.find(text))
            continue;
        next.entries.push_back({text, origin, Status::Candidate, {}});
    }

    if (round == 2)
        for (auto& entry : next.entries)
            if (entry.status == Status::Candidate)
                entry.status = Status::Dropped;

    next.completed_rounds = round;
    return next;
}

std::vector<std::string> parse_keyword_list(std::string_view text)
{
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& raw : split(text, '\n')) {
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        auto k = normalize_keyword(line);
        if (!k.empty() && seen.insert(k).second)
            out.push_back(k);
    }
    return out;
}

std::vector<std::string> load_keyword_list(const std::filesystem::path& path)
{
    return parse_keyword_list(read_file(path));
}

} // namespace synrev::keywords
