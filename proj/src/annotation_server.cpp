#include <synrev/annotation_server.hpp>
#include <synrev/diffkit.hpp>
#include <synrev/error.hpp>

#include <httplib.h>

#include <algorithm>

namespace synrev::annotation {

int http_status_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::AuthError: return 401;
    case ErrorCode::NotYourSession:
    case ErrorCode::ConflictOfInterest: return 403;
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownItem: return 404;
    case ErrorCode::AlreadyLabeled:
    case ErrorCode::NotDisagreed:
    case ErrorCode::Incomplete: return 409;
    case ErrorCode::EmptyItems:
    case ErrorCode::DuplicateAnnotators:
    case ErrorCode::InvalidLabel:
    case ErrorCode::ConfigError:
    case ErrorCode::SchemaError: return 400;
    default: return 500;
    }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message)
{
    send_json(res, http_status_for(code), json{{"error", to_string(code)}, {"message", message}});
}

std::string bearer(const httplib::Request& req)
{
    auto h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0)
        throw Error(ErrorCode::AuthError, "missing bearer token");
    return h.substr(prefix.size());
}

json diff_structure(const json& payload)
{
    if (!payload.is_object() || !payload.contains("diff") || !payload.at("diff").is_string())
        return nullptr;
    try {
        json files = json::array();
        for (const auto& f : diffkit::parse_unified_diff(payload.at("diff").get<std::string>()))
            files.push_back(diffkit::to_json(f));
        return files;
    } catch (const Error&) {
        return nullptr;  // the raw text is still in the payload
    }
}

/// What a principal may see of one item. Annotators get their own label only,
/// and the item state only once they have labeled it.
json item_view(const Session& s, const Item& it, const Principal& who)
{
    json v{{"item_id", it.item_id}, {"payload", it.payload}};
    if (auto d = diff_structure(it.payload); !d.is_null())
        v["diff_files"] = d;
    if (who.role == Role::Annotator) {
        auto own = it.labels.find(who.id);
        v["your_label"] = own == it.labels.end() ? json(nullptr) : own->second.to_json();
        if (own != it.labels.end())
            v["state"] = to_string(s.state(it));
        return v;
    }
    json labels = json::object();
    for (const auto& [id, l] : it.labels)
        labels[id] = l.to_json();
    v["labels"] = labels;
    v["adjudicated"] = it.adjudicated ? it.adjudicated->to_json() : json(nullptr);
    v["state"] = to_string(s.state(it));
    v["proposed_keywords"] = it.proposed_keywords;
    if (who.role == Role::Owner)
        v["ref"] = it.ref;
    return v;
}

json session_view(const Session& s, const Principal& who)
{
    json j{{"session_id", s.session_id},
           {"kind", to_string(s.kind)},
           {"rubric_version", s.rubric_version},
           {"annotators", s.annotators},
           {"adjudicator", s.adjudicator ? json(*s.adjudicator) : json(nullptr)},
           {"item_count", s.items.size()},
           {"created_at", s.created_at},
           {"you", {{"id", who.id},
                    {"role", who.role == Role::Annotator     ? "annotator"
                             : who.role == Role::Adjudicator ? "adjudicator"
                                                             : "owner"}}}};
    if (who.role == Role::Annotator)
        j["order_seed"] = s.seed;
    return j;
}

json body_json(const httplib::Request& req)
{
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded())
        throw Error(ErrorCode::InvalidLabel, "request body is not JSON");
    return j;
}

} // namespace

struct Server::Impl {
    SessionStore& store;
    httplib::Server http;

    explicit Impl(SessionStore& s) : store(s) {}

    Principal principal_for(const httplib::Request& req, const std::string& session_id)
    {
        Principal p;
        try {
            p = store.authenticate(bearer(req));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::UnknownSession)
                throw Error(ErrorCode::AuthError, "unknown token");
            throw;
        }
        store.snapshot(session_id);  // UnknownSession before NotYourSession
        if (p.session_id != session_id)
            throw Error(ErrorCode::NotYourSession, "token belongs to another session");
        return p;
    }

    template <typename F>
    httplib::Server::Handler wrap(F f)
    {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send_error(res, e.code(), e.what());
            } catch (const json::exception& e) {
                send_error(res, ErrorCode::InvalidLabel, e.what());
            } catch (const std::exception& e) {
                send_json(res, 500, json{{"error", "Internal"}, {"message", e.what()}});
            }
        };
    }

    void routes()
    {
        http.Get("/api/v1/health", wrap([](const httplib::Request&, httplib::Response& res) {
                     send_json(res, 200, json{{"ok", true}});
                 }));

        http.Post("/api/v1/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
                      auto s = store.create(SessionRequest::from_json(body_json(req)));
                      json tokens = json::object();
                      std::string adj_token;
                      for (const auto& [tok, who] : s.tokens) {
                          if (s.adjudicator && who == *s.adjudicator)
                              adj_token = tok;
                          else
                              tokens[who] = tok;
                      }
                      json out{{"session_id", s.session_id},
                               {"item_count", s.items.size()},
                               {"annotator_tokens", tokens},
                               {"owner_token", s.owner_token},
                               {"seed", s.seed}};
                      out["adjudicator_token"] = adj_token.empty() ? json(nullptr) : json(adj_token);
                      send_json(res, 201, out);
                  }));

        http.Get(R"(/api/v1/sessions/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                     auto id = req.matches[1].str();
                     auto who = principal_for(req, id);
                     send_json(res, 200, session_view(store.snapshot(id), who));
                 }));

        http.Get(R"(/api/v1/sessions/([^/]+)/items)",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                     auto id = req.matches[1].str();
                     auto who = principal_for(req, id);
                     auto s = store.snapshot(id);
                     json items = json::array();
                     if (who.role == Role::Annotator) {
                         const auto& order = s.order.at(who.id);
                         for (std::size_t pos = 0; pos < order.size(); ++pos) {
                             auto v = item_view(s, s.items[order[pos]], who);
                             v["position"] = pos;
                             items.push_back(std::move(v));
                         }
                     } else {
                         for (const auto& it : s.items)
                             items.push_back(item_view(s, it, who));
                     }
                     send_json(res, 200, json{{"items", items}});
                 }));

        http.Get(R"(/api/v1/sessions/([^/]+)/items/([^/]+))",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                     auto id = req.matches[1].str();
                     auto who = principal_for(req, id);
                     auto s = store.snapshot(id);
                     send_json(res, 200, item_view(s, s.item(req.matches[2].str()), who));
                 }));

        http.Post(R"(/api/v1/sessions/([^/]+)/items/([^/]+)/labels)",
                  wrap([this](const httplib::Request& req, httplib::Response& res) {
                      auto id = req.matches[1].str();
                      auto who = principal_for(req, id);
                      if (who.role != Role::Annotator)
                          throw Error(ErrorCode::NotYourSession, "only annotators submit labels");
                      auto s = store.snapshot(id);
                      auto label = Label::from_json(body_json(req), s.kind);
                      auto it = store.submit_label(id, who.id, req.matches[2].str(), label);
                      send_json(res, 200, item_view(store.snapshot(id), it, who));
                  }));

        http.Get(R"(/api/v1/sessions/([^/]+)/adjudication)",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                     auto id = req.matches[1].str();
                     auto who = principal_for(req, id);
                     if (who.role == Role::Annotator)
                         throw Error(ErrorCode::ConflictOfInterest, "annotators cannot view the adjudication queue");
                     auto s = store.snapshot(id);
                     json items = json::array();
                     for (const auto& it : s.items)
                         if (s.state(it) == ItemState::NeedsAdjudication)
                             items.push_back(item_view(s, it, who));
                     send_json(res, 200, json{{"items", items}});
                 }));

        http.Post(R"(/api/v1/sessions/([^/]+)/items/([^/]+)/adjudication)",
                  wrap([this](const httplib::Request& req, httplib::Response& res) {
                      auto id = req.matches[1].str();
                      auto who = principal_for(req, id);
                      if (who.role == Role::Annotator)
                          throw Error(ErrorCode::ConflictOfInterest, "'" + who.id + "' annotated this session");
                      auto s = store.snapshot(id);
                      auto label = Label::from_json(body_json(req), s.kind);
                      auto it = store.adjudicate(id, who.id, req.matches[2].str(), label);
                      send_json(res, 200, item_view(store.snapshot(id), it, who));
                  }));

        http.Get(R"(/api/v1/sessions/([^/]+)/stats)",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                     auto id = req.matches[1].str();
                     principal_for(req, id);
                     send_json(res, 200, store.stats(id).to_json());
                 }));

        http.Get(R"(/api/v1/sessions/([^/]+)/export)",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                     auto id = req.matches[1].str();
                     auto who = principal_for(req, id);
                     if (who.role == Role::Annotator)
                         throw Error(ErrorCode::NotYourSession, "export is for the owner and adjudicator");
                     auto force = req.get_param_value("force");
                     auto body = store.export_labels(id, force == "true" || force == "1");
                     res.status = 200;
                     res.set_content(body, "application/x-ndjson");
                 }));
    }
};

Server::Server(SessionStore& store, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(store))
{
    impl_->routes();
    if (static_dir)
        impl_->http.set_mount_point("/", static_dir->string());
}

Server::~Server()
{
    stop();
}

int Server::bind_any_port(const std::string& host)
{
    return impl_->http.bind_to_any_port(host);
}

bool Server::bind(const std::string& host, int port)
{
    return impl_->http.bind_to_port(host, port);
}

void Server::run()
{
    impl_->http.listen_after_bind();
}

void Server::stop()
{
    if (impl_->http.is_running())
        impl_->http.stop();
}

void Server::wait_until_ready() const
{
    impl_->http.wait_until_ready();
}

} // namespace synrev::annotation
