#include <synrev/annotation.hpp>
#include <synrev/datasets.hpp>
#include <synrev/error.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

namespace synrev::annotation {

namespace {

Error invalid(const std::string& why)
{
    return Error(ErrorCode::InvalidLabel, why);
}

bool get_bool(const json& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_boolean())
        throw invalid(std::string("criteria.") + key + " must be a boolean");
    return it->get<bool>();
}

void only_keys(const json& obj, std::initializer_list<const char*> keys, const char* what)
{
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
            throw invalid(std::string(what) + ": unknown key '" + it.key() + "'");
}

std::optional<metrics::AgreementReport> kappa_of(const std::vector<bool>& a, const std::vector<bool>& b)
{
    if (a.empty())
        return std::nullopt;
    return metrics::cohen_kappa(a, b);
}

void merge_keywords(std::vector<std::string>& into, const std::vector<std::string>& more)
{
    for (const auto& k : more)
        if (std::find(into.begin(), into.end(), k) == into.end())
            into.push_back(k);
}

} // namespace

std::string_view to_string(Kind k)
{
    switch (k) {
    case Kind::KeywordCommit: return "keyword_commit";
    case Kind::ReviewSuitability: return "review_suitability";
    case Kind::ExternalVetting: return "external_vetting";
    case Kind::FinalEvaluation: return "final_evaluation";
    }
    return "?";
}

Kind kind_from_string(std::string_view s)
{
    for (Kind k : {Kind::KeywordCommit, Kind::ReviewSuitability, Kind::ExternalVetting, Kind::FinalEvaluation})
        if (to_string(k) == s)
            return k;
    throw Error(ErrorCode::ConfigError, "unknown session kind '" + std::string(s) + "'");
}

std::string_view to_string(ItemState s)
{
    switch (s) {
    case ItemState::Unlabeled: return "unlabeled";
    case ItemState::AwaitingSecond: return "awaiting_second";
    case ItemState::Agreed: return "agreed";
    case ItemState::NeedsAdjudication: return "needs_adjudication";
    case ItemState::Adjudicated: return "adjudicated";
    }
    return "?";
}

// --- labels ------------------------------------------------------------------

json Label::to_json() const
{
    json j{{"verdict", verdict}, {"note", note}};
    if (suitability)
        j["criteria"] = {{"coherent", suitability->coherent},
                         {"addresses_vulnerability", suitability->addresses_vulnerability},
                         {"plausible_trigger", suitability->plausible_trigger}};
    if (evaluation)
        j["criteria"] = {{"semantic_equivalence", evaluation->semantic_equivalence},
                         {"applicability", evaluation->applicability}};
    if (!proposed_keywords.empty())
        j["proposed_keywords"] = proposed_keywords;
    return j;
}

Label Label::from_json(const json& j, Kind kind)
{
    if (!j.is_object())
        throw invalid("label must be an object");
    only_keys(j, {"verdict", "criteria", "note", "proposed_keywords"}, "label");
    Label l;
    std::optional<bool> verdict;
    if (j.contains("verdict")) {
        if (!j.at("verdict").is_boolean())
            throw invalid("verdict must be a boolean");
        verdict = j.at("verdict").get<bool>();
    }
    if (j.contains("note")) {
        if (!j.at("note").is_string())
            throw invalid("note must be a string");
        l.note = j.at("note").get<std::string>();
    }
    const bool has_criteria = j.contains("criteria");
    if (has_criteria && !j.at("criteria").is_object())
        throw invalid("criteria must be an object");

    switch (kind) {
    case Kind::ReviewSuitability: {
        if (!has_criteria)
            throw invalid("review_suitability labels need criteria");
        const auto& c = j.at("criteria");
        only_keys(c, {"coherent", "addresses_vulnerability", "plausible_trigger"}, "criteria");
        l.suitability = SuitabilityCriteria{get_bool(c, "coherent"), get_bool(c, "addresses_vulnerability"),
                                            get_bool(c, "plausible_trigger")};
        l.verdict = l.suitability->coherent && l.suitability->addresses_vulnerability
                 && l.suitability->plausible_trigger;
        break;
    }
    case Kind::FinalEvaluation: {
        if (!has_criteria)
            throw invalid("final_evaluation labels need criteria");
        const auto& c = j.at("criteria");
        only_keys(c, {"semantic_equivalence", "applicability"}, "criteria");
        l.evaluation = EvaluationCriteria{get_bool(c, "semantic_equivalence"), get_bool(c, "applicability")};
        l.verdict = l.evaluation->semantic_equivalence && l.evaluation->applicability;
        break;
    }
    case Kind::KeywordCommit:
    case Kind::ExternalVetting:
        if (has_criteria)
            throw invalid(std::string(to_string(kind)) + " labels take no criteria");
        if (!verdict)
            throw invalid("verdict is required");
        l.verdict = *verdict;
        break;
    }
    if (verdict && *verdict != l.verdict)
        throw invalid("verdict contradicts the criteria");

    if (j.contains("proposed_keywords")) {
        if (kind != Kind::KeywordCommit)
            throw invalid("proposed_keywords only apply to keyword_commit sessions");
        const auto& arr = j.at("proposed_keywords");
        if (!arr.is_array())
            throw invalid("proposed_keywords must be an array");
        for (const auto& k : arr) {
            if (!k.is_string())
                throw invalid("proposed_keywords must hold strings");
            auto norm = to_lower_ascii(trim(k.get<std::string>()));
            if (!norm.empty())
                merge_keywords(l.proposed_keywords, {norm});
        }
    }
    return l;
}

bool labels_agree(Kind kind, const Label& a, const Label& b)
{
    if (kind == Kind::FinalEvaluation)
        return a.evaluation == b.evaluation;
    return a.verdict == b.verdict;
}

// --- sessions ----------------------------------------------------------------

ItemState Session::state(const Item& item) const
{
    if (item.adjudicated)
        return ItemState::Adjudicated;
    auto a = item.labels.find(annotators[0]);
    auto b = item.labels.find(annotators[1]);
    const bool has_a = a != item.labels.end(), has_b = b != item.labels.end();
    if (!has_a && !has_b)
        return ItemState::Unlabeled;
    if (has_a != has_b)
        return ItemState::AwaitingSecond;
    return labels_agree(kind, a->second, b->second) ? ItemState::Agreed : ItemState::NeedsAdjudication;
}

std::optional<Label> Session::final_label(const Item& item) const
{
    switch (state(item)) {
    case ItemState::Adjudicated: return item.adjudicated;
    case ItemState::Agreed: return item.labels.at(annotators[0]);
    default: return std::nullopt;
    }
}

const Item& Session::item(const std::string& item_id) const
{
    for (const auto& it : items)
        if (it.item_id == item_id)
            return it;
    throw Error(ErrorCode::UnknownItem, "no item '" + item_id + "' in session " + session_id);
}

json Session::to_json() const
{
    json items_j = json::array();
    for (const auto& it : items) {
        json labels = json::object();
        for (const auto& [who, l] : it.labels)
            labels[who] = l.to_json();
        items_j.push_back({{"item_id", it.item_id},
                           {"payload", it.payload},
                           {"ref", it.ref},
                           {"labels", labels},
                           {"adjudicated", it.adjudicated ? it.adjudicated->to_json() : json(nullptr)},
                           {"proposed_keywords", it.proposed_keywords}});
    }
    return json{{"session_id", session_id},
                {"kind", to_string(kind)},
                {"rubric_version", rubric_version},
                {"annotators", annotators},
                {"adjudicator", adjudicator ? json(*adjudicator) : json(nullptr)},
                {"seed", seed},
                {"order", order},
                {"tokens", tokens},
                {"owner_token", owner_token},
                {"created_at", created_at},
                {"items", items_j}};
}

Session Session::from_json(const json& j)
{
    try {
        Session s;
        s.session_id = j.at("session_id").get<std::string>();
        s.kind = kind_from_string(j.at("kind").get<std::string>());
        s.rubric_version = j.at("rubric_version").get<std::string>();
        s.annotators = j.at("annotators").get<std::vector<std::string>>();
        if (!j.at("adjudicator").is_null())
            s.adjudicator = j.at("adjudicator").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.order = j.at("order").get<std::map<std::string, std::vector<std::size_t>>>();
        s.tokens = j.at("tokens").get<std::map<std::string, std::string>>();
        s.owner_token = j.at("owner_token").get<std::string>();
        s.created_at = j.at("created_at").get<std::string>();
        for (const auto& ij : j.at("items")) {
            Item it;
            it.item_id = ij.at("item_id").get<std::string>();
            it.payload = ij.at("payload");
            it.ref = ij.at("ref").get<std::string>();
            for (auto l = ij.at("labels").begin(); l != ij.at("labels").end(); ++l)
                it.labels[l.key()] = Label::from_json(l.value(), s.kind);
            if (!ij.at("adjudicated").is_null())
                it.adjudicated = Label::from_json(ij.at("adjudicated"), s.kind);
            it.proposed_keywords = ij.at("proposed_keywords").get<std::vector<std::string>>();
            s.items.push_back(std::move(it));
        }
        if (s.annotators.size() != 2)
            throw Error(ErrorCode::SchemaError, "session needs exactly two annotators");
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("session file: ") + e.what());
    }
}

SessionRequest SessionRequest::from_json(const json& j)
{
    try {
        SessionRequest r;
        r.kind = kind_from_string(j.at("kind").get<std::string>());
        r.annotators = j.at("annotators").get<std::vector<std::string>>();
        if (j.contains("adjudicator") && !j.at("adjudicator").is_null())
            r.adjudicator = j.at("adjudicator").get<std::string>();
        if (j.contains("rubric_version"))
            r.rubric_version = j.at("rubric_version").get<std::string>();
        if (j.contains("seed"))
            r.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& ij : j.at("items")) {
            NewItem it;
            if (ij.contains("item_id"))
                it.item_id = ij.at("item_id").get<std::string>();
            it.payload = ij.value("payload", json::object());
            it.ref = ij.value("ref", std::string());
            r.items.push_back(std::move(it));
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("session request: ") + e.what());
    }
}

// --- stats and export --------------------------------------------------------

json SessionStats::to_json() const
{
    json p{{"total", progress.total},
           {"labeled_by", progress.labeled_by},
           {"unlabeled", progress.unlabeled},
           {"awaiting_second", progress.awaiting_second},
           {"agreed", progress.agreed},
           {"needs_adjudication", progress.needs_adjudication},
           {"adjudicated", progress.adjudicated},
           {"pending", progress.unlabeled + progress.awaiting_second + progress.needs_adjudication}};
    json j{{"progress", p}, {"kappa_available", kappa.has_value()}};
    j["kappa"] = kappa ? kappa->to_json() : json(nullptr);
    if (!criterion_kappa.empty()) {
        json c = json::object();
        for (const auto& [name, r] : criterion_kappa)
            c[name] = r.to_json();
        j["criterion_kappa"] = c;
    }
    return j;
}

namespace {

struct Verdicts {
    std::vector<bool> a, b;
    std::vector<bool> sem_a, sem_b, app_a, app_b;

    void add(const Label& la, const Label& lb)
    {
        a.push_back(la.verdict);
        b.push_back(lb.verdict);
        if (la.evaluation && lb.evaluation) {
            sem_a.push_back(la.evaluation->semantic_equivalence);
            sem_b.push_back(lb.evaluation->semantic_equivalence);
            app_a.push_back(la.evaluation->applicability);
            app_b.push_back(lb.evaluation->applicability);
        }
    }

    void fill(std::optional<metrics::AgreementReport>& kappa,
              std::map<std::string, metrics::AgreementReport>& per_criterion) const
    {
        kappa = kappa_of(a, b);
        if (!sem_a.empty() && sem_a.size() == a.size()) {
            per_criterion["semantic_equivalence"] = metrics::cohen_kappa(sem_a, sem_b);
            per_criterion["applicability"] = metrics::cohen_kappa(app_a, app_b);
        }
    }
};

} // namespace

SessionStats session_stats(const Session& s)
{
    SessionStats st;
    st.progress.total = s.items.size();
    for (const auto& a : s.annotators)
        st.progress.labeled_by[a] = 0;
    Verdicts v;
    for (const auto& it : s.items) {
        for (const auto& [who, l] : it.labels)
            ++st.progress.labeled_by[who];
        switch (s.state(it)) {
        case ItemState::Unlabeled: ++st.progress.unlabeled; break;
        case ItemState::AwaitingSecond: ++st.progress.awaiting_second; break;
        case ItemState::Agreed: ++st.progress.agreed; break;
        case ItemState::NeedsAdjudication: ++st.progress.needs_adjudication; break;
        case ItemState::Adjudicated: ++st.progress.adjudicated; break;
        }
        auto la = it.labels.find(s.annotators[0]);
        auto lb = it.labels.find(s.annotators[1]);
        if (la != it.labels.end() && lb != it.labels.end())
            v.add(la->second, lb->second);
    }
    v.fill(st.kappa, st.criterion_kappa);
    return st;
}

json export_item(const Session& s, const Item& item)
{
    json labels = json::object();
    for (const auto& [who, l] : item.labels)
        labels[who] = l.to_json();
    auto fin = s.final_label(item);
    return json{{"item_id", item.item_id},
                {"ref", item.ref},
                {"kind", to_string(s.kind)},
                {"annotators", s.annotators},
                {"labels", labels},
                {"adjudicated", item.adjudicated ? item.adjudicated->to_json() : json(nullptr)},
                {"final_label", fin ? fin->to_json() : json(nullptr)},
                {"state", to_string(s.state(item))},
                {"proposed_keywords", item.proposed_keywords},
                {"payload", item.payload}};
}

std::string export_labels(const Session& s, bool force)
{
    if (!force) {
        std::size_t open = 0;
        for (const auto& it : s.items)
            if (!s.final_label(it))
                ++open;
        if (open)
            throw Error(ErrorCode::Incomplete,
                        fmt::format("{} of {} items lack a final label (use force)", open, s.items.size()));
    }
    std::string out;
    for (const auto& it : s.items)
        out += export_item(s, it).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    return out;
}

ExportedItem ExportedItem::from_json(const json& j)
{
    ExportedItem e;
    e.item_id = j.at("item_id").get<std::string>();
    e.ref = j.at("ref").get<std::string>();
    e.kind = kind_from_string(j.at("kind").get<std::string>());
    e.annotators = j.at("annotators").get<std::vector<std::string>>();
    if (e.annotators.size() != 2)
        throw Error(ErrorCode::SchemaError, "export line needs two annotators");
    for (auto l = j.at("labels").begin(); l != j.at("labels").end(); ++l)
        e.labels[l.key()] = Label::from_json(l.value(), e.kind);
    if (!j.at("adjudicated").is_null())
        e.adjudicated = Label::from_json(j.at("adjudicated"), e.kind);
    if (!j.at("final_label").is_null())
        e.final_label = Label::from_json(j.at("final_label"), e.kind);
    e.proposed_keywords = j.at("proposed_keywords").get<std::vector<std::string>>();
    e.payload = j.value("payload", json::object());
    return e;
}

std::vector<ExportedItem> read_export(const std::filesystem::path& path)
{
    std::vector<ExportedItem> out;
    datasets::for_each_jsonl(path, [&](const json& j, std::size_t) {
        try {
            out.push_back(ExportedItem::from_json(j));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InvalidLabel)
                throw Error(ErrorCode::SchemaError, e.what());
            throw;
        }
    });
    return out;
}

std::optional<metrics::AgreementReport> export_kappa(std::span<const ExportedItem> items)
{
    Verdicts v;
    for (const auto& it : items) {
        auto la = it.labels.find(it.annotators[0]);
        auto lb = it.labels.find(it.annotators[1]);
        if (la != it.labels.end() && lb != it.labels.end())
            v.add(la->second, lb->second);
    }
    std::optional<metrics::AgreementReport> k;
    std::map<std::string, metrics::AgreementReport> unused;
    v.fill(k, unused);
    return k;
}

// --- store -------------------------------------------------------------------

SessionStore::SessionStore(std::optional<std::filesystem::path> dir, std::shared_ptr<const Clock> clock)
    : dir_(std::move(dir)), clock_(std::move(clock))
{
    if (!dir_)
        return;
    std::filesystem::create_directories(*dir_);
    std::lock_guard lock(mu_);
    refresh_locked();
}

void SessionStore::refresh_locked() const
{
    if (!dir_)
        return;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(*dir_))
        if (e.path().extension() == ".json" && !sessions_.count(e.path().stem().string()))
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto parsed = json::parse(read_file(f), nullptr, false);
        if (parsed.is_discarded())
            throw Error(ErrorCode::SchemaError, "corrupt session file " + f.string());
        auto s = Session::from_json(parsed);
        for (const auto& [tok, who] : s.tokens)
            tokens_[tok] = Principal{s.session_id, who == s.adjudicator ? Role::Adjudicator : Role::Annotator, who};
        tokens_[s.owner_token] = Principal{s.session_id, Role::Owner, "owner"};
        auto e = std::make_unique<Entry>();
        e->session = std::move(s);
        sessions_.emplace(e->session.session_id, std::move(e));
    }
}

std::string SessionStore::new_token()
{
    static thread_local std::random_device rd;
    return fmt::format("{:08x}{:08x}{:08x}{:08x}", rd(), rd(), rd(), rd());
}

Session SessionStore::create(const SessionRequest& request)
{
    if (request.items.empty())
        throw Error(ErrorCode::EmptyItems, "a session needs at least one item");
    if (request.annotators.size() != 2)
        throw Error(ErrorCode::ConfigError, "a session needs exactly two annotators");
    const auto& a = request.annotators[0];
    const auto& b = request.annotators[1];
    if (a.empty() || b.empty() || a == "owner" || b == "owner")
        throw Error(ErrorCode::ConfigError, "annotator ids must be non-empty and not 'owner'");
    if (a == b)
        throw Error(ErrorCode::DuplicateAnnotators, "annotator '" + a + "' listed twice");
    if (request.adjudicator && (*request.adjudicator == a || *request.adjudicator == b))
        throw Error(ErrorCode::ConflictOfInterest, "the adjudicator cannot also annotate");
    if (request.adjudicator && (request.adjudicator->empty() || *request.adjudicator == "owner"))
        throw Error(ErrorCode::ConfigError, "adjudicator id must be non-empty and not 'owner'");

    Session s;
    s.kind = request.kind;
    s.rubric_version = request.rubric_version;
    s.annotators = request.annotators;
    s.adjudicator = request.adjudicator;
    s.seed = request.seed;
    s.created_at = clock_->now_utc();
    std::set<std::string> ids;
    for (std::size_t i = 0; i < request.items.size(); ++i) {
        const auto& src = request.items[i];
        Item it;
        it.item_id = src.item_id.empty() ? fmt::format("i{:05}", i + 1) : src.item_id;
        if (!ids.insert(it.item_id).second)
            throw Error(ErrorCode::SchemaError, "duplicate item id '" + it.item_id + "'");
        it.payload = src.payload;
        it.ref = src.ref;
        s.items.push_back(std::move(it));
    }
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<std::size_t> idx(s.items.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        stable_shuffle(idx, s.seed * 2 + k + 1);
        s.order[s.annotators[k]] = std::move(idx);
    }

    std::lock_guard lock(mu_);
    do
        s.session_id = "s" + new_token().substr(0, 12);
    while (sessions_.count(s.session_id));
    for (const auto& who : s.annotators) {
        auto tok = new_token();
        s.tokens[tok] = who;
        tokens_[tok] = Principal{s.session_id, Role::Annotator, who};
    }
    if (s.adjudicator) {
        auto tok = new_token();
        s.tokens[tok] = *s.adjudicator;
        tokens_[tok] = Principal{s.session_id, Role::Adjudicator, *s.adjudicator};
    }
    s.owner_token = new_token();
    tokens_[s.owner_token] = Principal{s.session_id, Role::Owner, "owner"};
    persist(s);
    auto e = std::make_unique<Entry>();
    e->session = s;
    sessions_.emplace(s.session_id, std::move(e));
    return s;
}

std::vector<std::string> SessionStore::list() const
{
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, e] : sessions_)
        out.push_back(id);
    return out;
}

SessionStore::Entry& SessionStore::entry(const std::string& session_id) const
{
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
        // sessions created by another process (annotate create) appear on disk
        refresh_locked();
        it = sessions_.find(session_id);
    }
    if (it == sessions_.end())
        throw Error(ErrorCode::UnknownSession, "no session '" + session_id + "'");
    return *it->second;
}

Session SessionStore::snapshot(const std::string& session_id) const
{
    auto& e = entry(session_id);
    std::shared_lock lock(e.mu);
    return e.session;
}

Principal SessionStore::authenticate(const std::string& token) const
{
    std::lock_guard lock(mu_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) {
        refresh_locked();
        it = tokens_.find(token);
    }
    if (it == tokens_.end())
        throw Error(ErrorCode::UnknownSession, "unknown token");
    return it->second;
}

void SessionStore::persist(const Session& s) const
{
    if (!dir_)
        return;
    auto path = *dir_ / (s.session_id + ".json");
    write_file_atomic(path, s.to_json().dump(1, ' ', false, json::error_handler_t::replace) + "\n");
    std::filesystem::permissions(path, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
}

Item SessionStore::submit_label(const std::string& session_id, const std::string& annotator_id,
                                const std::string& item_id, const Label& label)
{
    auto& e = entry(session_id);
    std::unique_lock lock(e.mu);
    auto& s = e.session;
    if (std::find(s.annotators.begin(), s.annotators.end(), annotator_id) == s.annotators.end())
        throw Error(ErrorCode::NotYourSession, "'" + annotator_id + "' does not annotate session " + session_id);
    s.item(item_id);  // UnknownItem
    auto& it = *std::find_if(s.items.begin(), s.items.end(), [&](const Item& i) { return i.item_id == item_id; });
    if (it.labels.count(annotator_id))
        throw Error(ErrorCode::AlreadyLabeled, "'" + annotator_id + "' already labeled " + item_id);
    if (!label.proposed_keywords.empty() && s.kind != Kind::KeywordCommit)
        throw invalid("proposed_keywords only apply to keyword_commit sessions");
    if (s.kind == Kind::ReviewSuitability && !label.suitability)
        throw invalid("review_suitability labels need criteria");
    if (s.kind == Kind::FinalEvaluation && !label.evaluation)
        throw invalid("final_evaluation labels need criteria");
    it.labels[annotator_id] = label;
    merge_keywords(it.proposed_keywords, label.proposed_keywords);
    persist(s);
    return it;
}

Item SessionStore::adjudicate(const std::string& session_id, const std::string& adjudicator_id,
                              const std::string& item_id, const Label& label)
{
    auto& e = entry(session_id);
    std::unique_lock lock(e.mu);
    auto& s = e.session;
    if (std::find(s.annotators.begin(), s.annotators.end(), adjudicator_id) != s.annotators.end())
        throw Error(ErrorCode::ConflictOfInterest, "'" + adjudicator_id + "' annotated this session");
    if (adjudicator_id != "owner" && s.adjudicator != adjudicator_id)
        throw Error(ErrorCode::NotYourSession, "'" + adjudicator_id + "' is not the adjudicator of " + session_id);
    s.item(item_id);
    auto& it = *std::find_if(s.items.begin(), s.items.end(), [&](const Item& i) { return i.item_id == item_id; });
    if (s.state(it) != ItemState::NeedsAdjudication)
        throw Error(ErrorCode::NotDisagreed, item_id + " is " + std::string(to_string(s.state(it))));
    it.adjudicated = label;
    merge_keywords(it.proposed_keywords, label.proposed_keywords);
    persist(s);
    return it;
}

SessionStats SessionStore::stats(const std::string& session_id) const
{
    auto& e = entry(session_id);
    std::shared_lock lock(e.mu);
    return session_stats(e.session);
}

std::string SessionStore::export_labels(const std::string& session_id, bool force) const
{
    auto& e = entry(session_id);
    std::shared_lock lock(e.mu);
    return annotation::export_labels(e.session, force);
}

} // namespace synrev::annotation
