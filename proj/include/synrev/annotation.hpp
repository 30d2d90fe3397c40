#pragma once

#include <synrev/metrics.hpp>
#include <synrev/records.hpp>
#include <synrev/util.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace synrev::annotation {

enum class Kind { KeywordCommit, ReviewSuitability, ExternalVetting, FinalEvaluation };

std::string_view to_string(Kind k);
Kind kind_from_string(std::string_view s);

struct SuitabilityCriteria {
    bool coherent = false;
    bool addresses_vulnerability = false;
    bool plausible_trigger = false;

    bool operator==(const SuitabilityCriteria&) const = default;
};

struct EvaluationCriteria {
    bool semantic_equivalence = false;
    bool applicability = false;

    bool operator==(const EvaluationCriteria&) const = default;
};

struct Label {
    bool verdict = false;
    std::optional<SuitabilityCriteria> suitability;  // review_suitability only
    std::optional<EvaluationCriteria> evaluation;    // final_evaluation only
    std::string note;
    std::vector<std::string> proposed_keywords;      // keyword_commit only

    json to_json() const;
    /// Parses and normalizes a submitted label for a session kind. Derived
    /// verdicts (suitability, evaluation) may be omitted; a contradicting
    /// verdict is an InvalidLabel.
    static Label from_json(const json& j, Kind kind);

    bool operator==(const Label&) const = default;
};

/// Two labels agree when their verdicts match; for final_evaluation both
/// criteria must match as well.
bool labels_agree(Kind kind, const Label& a, const Label& b);

enum class ItemState { Unlabeled, AwaitingSecond, Agreed, NeedsAdjudication, Adjudicated };
std::string_view to_string(ItemState s);

struct Item {
    std::string item_id;
    json payload;
    std::string ref;  // provenance (cell id, commit key); never shown to annotators
    std::map<std::string, Label> labels;
    std::optional<Label> adjudicated;
    std::vector<std::string> proposed_keywords;
};

struct Session {
    std::string session_id;
    Kind kind = Kind::KeywordCommit;
    std::string rubric_version;
    std::vector<std::string> annotators;  // exactly two
    std::optional<std::string> adjudicator;
    std::uint64_t seed = 0;
    std::map<std::string, std::vector<std::size_t>> order;  // per-annotator presentation order
    std::map<std::string, std::string> tokens;             // bearer token -> principal
    std::string owner_token;
    std::string created_at;
    std::vector<Item> items;

    ItemState state(const Item& item) const;
    /// Adjudicated label, else the agreed label of the first annotator.
    std::optional<Label> final_label(const Item& item) const;
    const Item& item(const std::string& item_id) const;

    json to_json() const;
    static Session from_json(const json& j);
};

struct NewItem {
    std::string item_id;  // generated when empty
    json payload;
    std::string ref;
};

struct SessionRequest {
    Kind kind = Kind::KeywordCommit;
    std::vector<NewItem> items;
    std::vector<std::string> annotators;
    std::optional<std::string> adjudicator;
    std::string rubric_version = "1";
    std::uint64_t seed = 0;

    static SessionRequest from_json(const json& j);
};

struct Progress {
    std::size_t total = 0;
    std::map<std::string, std::size_t> labeled_by;
    std::size_t unlabeled = 0;
    std::size_t awaiting_second = 0;
    std::size_t agreed = 0;
    std::size_t needs_adjudication = 0;
    std::size_t adjudicated = 0;
};

struct SessionStats {
    Progress progress;
    /// Over verdicts of fully double-labeled items, in item order. Empty until
    /// at least one item has both labels.
    std::optional<metrics::AgreementReport> kappa;
    /// final_evaluation sessions also report one kappa per criterion.
    std::map<std::string, metrics::AgreementReport> criterion_kappa;

    json to_json() const;
};

SessionStats session_stats(const Session& s);

/// One exported line per item, in item order.
json export_item(const Session& s, const Item& item);
std::string export_labels(const Session& s, bool force);

/// A parsed export line, the form downstream stages consume.
struct ExportedItem {
    std::string item_id;
    std::string ref;
    Kind kind = Kind::KeywordCommit;
    std::vector<std::string> annotators;
    std::map<std::string, Label> labels;
    std::optional<Label> adjudicated;
    std::optional<Label> final_label;
    std::vector<std::string> proposed_keywords;
    json payload;

    static ExportedItem from_json(const json& j);
};

std::vector<ExportedItem> read_export(const std::filesystem::path& path);

/// Kappa over exported labels, computed exactly as session_stats does.
std::optional<metrics::AgreementReport> export_kappa(std::span<const ExportedItem> items);

enum class Role { Annotator, Adjudicator, Owner };

struct Principal {
    std::string session_id;
    Role role = Role::Annotator;
    std::string id;  // annotator / adjudicator id; "owner" for the owner
};

/// Thread-safe session registry persisted as one JSON file per session.
class SessionStore {
public:
    explicit SessionStore(std::optional<std::filesystem::path> dir = std::nullopt,
                          std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>());

    /// Returns the created session, tokens included.
    Session create(const SessionRequest& request);

    std::vector<std::string> list() const;
    Session snapshot(const std::string& session_id) const;
    /// Throws UnknownSession for an unknown token.
    Principal authenticate(const std::string& token) const;

    Item submit_label(const std::string& session_id, const std::string& annotator_id, const std::string& item_id,
                      const Label& label);
    Item adjudicate(const std::string& session_id, const std::string& adjudicator_id, const std::string& item_id,
                    const Label& label);

    SessionStats stats(const std::string& session_id) const;
    std::string export_labels(const std::string& session_id, bool force) const;

private:
    struct Entry {
        mutable std::shared_mutex mu;
        Session session;
    };
    Entry& entry(const std::string& session_id) const;
    void persist(const Session& s) const;
    void refresh_locked() const;
    std::string new_token();

    std::optional<std::filesystem::path> dir_;
    std::shared_ptr<const Clock> clock_;
    mutable std::mutex mu_;
    // mutable: lookups pick up sessions another process wrote to dir_
    mutable std::map<std::string, std::unique_ptr<Entry>> sessions_;
    mutable std::map<std::string, Principal> tokens_;
};

} // namespace synrev::annotation
