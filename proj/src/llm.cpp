#include <synrev/error.hpp>
#include <synrev/http.hpp>
#include <synrev/llm.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>
#include <sstream>

namespace synrev::llm {

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& what)
{
    if (!j.is_object())
        throw Error(ErrorCode::ConfigError, what + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw Error(ErrorCode::ConfigError, what + ": unknown key '" + it.key() + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& what)
{
    if (!j.contains(key))
        return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, what + "." + key + ": " + e.what());
    }
}

std::uint64_t whitespace_tokens(std::string_view s)
{
    std::istringstream in{std::string(s)};
    std::uint64_t n = 0;
    std::string w;
    while (in >> w)
        ++n;
    return n;
}

bool is_transient(const Error& e)
{
    switch (e.code()) {
    case ErrorCode::RateLimited:
    case ErrorCode::Timeout:
    case ErrorCode::HostUnavailable:
        return true;
    case ErrorCode::ProviderError:
        return e.http_status && (*e.http_status >= 500 || *e.http_status == 408);
    default:
        return false;
    }
}

std::string slug(std::string_view s)
{
    std::string out;
    for (char c : s)
        out.push_back((std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_') ? c : '_');
    return out.empty() ? "_" : out;
}

} // namespace

// --- config ------------------------------------------------------------------

json FieldMapping::to_json() const
{
    return json{{"model_field", model_field},
                {"messages_field", messages_field},
                {"temperature_field", temperature_field},
                {"max_tokens_field", max_tokens_field},
                {"response_text_pointer", response_text_pointer},
                {"input_tokens_pointer", input_tokens_pointer},
                {"output_tokens_pointer", output_tokens_pointer},
                {"auth_header", auth_header},
                {"auth_prefix", auth_prefix},
                {"extra_headers", extra_headers},
                {"extra_body", extra_body}};
}

FieldMapping FieldMapping::from_json(const json& j)
{
    const std::string what = "mapping";
    reject_unknown_keys(j,
                        {"model_field", "messages_field", "temperature_field", "max_tokens_field",
                         "response_text_pointer", "input_tokens_pointer", "output_tokens_pointer", "auth_header",
                         "auth_prefix", "extra_headers", "extra_body"},
                        what);
    FieldMapping m;
    read_opt(j, "model_field", m.model_field, what);
    read_opt(j, "messages_field", m.messages_field, what);
    read_opt(j, "temperature_field", m.temperature_field, what);
    read_opt(j, "max_tokens_field", m.max_tokens_field, what);
    read_opt(j, "response_text_pointer", m.response_text_pointer, what);
    read_opt(j, "input_tokens_pointer", m.input_tokens_pointer, what);
    read_opt(j, "output_tokens_pointer", m.output_tokens_pointer, what);
    read_opt(j, "auth_header", m.auth_header, what);
    read_opt(j, "auth_prefix", m.auth_prefix, what);
    read_opt(j, "extra_headers", m.extra_headers, what);
    if (j.contains("extra_body"))
        m.extra_body = j.at("extra_body");
    return m;
}

void ProviderConfig::validate() const
{
    auto fail = [&](const std::string& why) { throw Error(ErrorCode::ConfigError, "provider '" + provider_id + "': " + why); };
    if (provider_id.empty())
        throw Error(ErrorCode::ConfigError, "provider_id is empty");
    if (kind != "mock" && kind != "http")
        fail("kind must be 'mock' or 'http'");
    if (max_concurrency < 1)
        fail("max_concurrency must be >= 1");
    if (temperature < 0.0)
        fail("temperature must be >= 0");
    if (kind == "http") {
        http::parse_url(endpoint);
        if (model_name.empty())
            fail("model_name is required for http providers");
    }
}

json ProviderConfig::to_json() const
{
    return json{{"provider_id", provider_id},
                {"kind", kind},
                {"endpoint", endpoint},
                {"model_name", model_name},
                {"auth_env_var", auth_env_var},
                {"max_concurrency", max_concurrency},
                {"requests_per_minute", requests_per_minute},
                {"temperature", temperature},
                {"max_output_tokens", max_output_tokens},
                {"max_prompt_chars", max_prompt_chars},
                {"timeout_s", timeout_s},
                {"max_retries", max_retries},
                {"backoff_base_ms", backoff_base_ms},
                {"backoff_cap_ms", backoff_cap_ms},
                {"mapping", mapping.to_json()}};
}

ProviderConfig ProviderConfig::from_json(const json& j)
{
    const std::string what = "provider";
    reject_unknown_keys(j,
                        {"provider_id", "kind", "endpoint", "model_name", "auth_env_var", "max_concurrency",
                         "requests_per_minute", "temperature", "max_output_tokens", "max_prompt_chars", "timeout_s",
                         "max_retries", "backoff_base_ms", "backoff_cap_ms", "mapping"},
                        what);
    ProviderConfig c;
    read_opt(j, "provider_id", c.provider_id, what);
    read_opt(j, "kind", c.kind, what);
    read_opt(j, "endpoint", c.endpoint, what);
    read_opt(j, "model_name", c.model_name, what);
    read_opt(j, "auth_env_var", c.auth_env_var, what);
    read_opt(j, "max_concurrency", c.max_concurrency, what);
    read_opt(j, "requests_per_minute", c.requests_per_minute, what);
    read_opt(j, "temperature", c.temperature, what);
    read_opt(j, "max_output_tokens", c.max_output_tokens, what);
    read_opt(j, "max_prompt_chars", c.max_prompt_chars, what);
    read_opt(j, "timeout_s", c.timeout_s, what);
    read_opt(j, "max_retries", c.max_retries, what);
    read_opt(j, "backoff_base_ms", c.backoff_base_ms, what);
    read_opt(j, "backoff_cap_ms", c.backoff_cap_ms, what);
    if (j.contains("mapping"))
        c.mapping = FieldMapping::from_json(j.at("mapping"));
    if (c.model_name.empty() && c.kind == "mock")
        c.model_name = "mock-" + c.provider_id;
    c.validate();
    return c;
}

// --- results -----------------------------------------------------------------

json GenerationResult::to_json() const
{
    return json{{"commit_ref", {{"repo", commit_ref.repo}, {"sha", commit_ref.sha}}},
                {"provider_id", provider_id},
                {"model_name", model_name},
                {"strategy", strategy},
                {"template_version", template_version},
                {"prompt_hash", prompt_hash},
                {"response_text", response_text},
                {"final_review", final_review},
                {"turn_responses", turn_responses},
                {"latency_ms", latency_ms},
                {"token_counts",
                 {{"in", token_counts.input}, {"out", token_counts.output}, {"approximate", token_counts.approximate}}},
                {"retry_count", retry_count},
                {"created_at", created_at},
                {"from_cache", from_cache}};
}

GenerationResult GenerationResult::from_json(const json& j)
{
    try {
        GenerationResult r;
        r.commit_ref = {j.at("commit_ref").at("repo").get<std::string>(),
                        j.at("commit_ref").at("sha").get<std::string>()};
        r.provider_id = j.at("provider_id").get<std::string>();
        r.model_name = j.at("model_name").get<std::string>();
        r.strategy = j.at("strategy").get<std::string>();
        r.template_version = j.at("template_version").get<std::string>();
        r.prompt_hash = j.at("prompt_hash").get<std::string>();
        r.response_text = j.at("response_text").get<std::string>();
        r.final_review = j.at("final_review").get<std::string>();
        r.turn_responses = j.at("turn_responses").get<std::vector<std::string>>();
        r.latency_ms = j.at("latency_ms").get<std::int64_t>();
        r.token_counts = {j.at("token_counts").at("in").get<std::uint64_t>(),
                          j.at("token_counts").at("out").get<std::uint64_t>(),
                          j.at("token_counts").at("approximate").get<bool>()};
        r.retry_count = j.at("retry_count").get<std::uint32_t>();
        r.created_at = j.at("created_at").get<std::string>();
        r.from_cache = j.at("from_cache").get<bool>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("GenerationResult: ") + e.what());
    }
}

// --- providers ---------------------------------------------------------------

ProviderReply MockProvider::complete(const ProviderConfig& config, std::span<const ChatMessage> conversation,
                                     const CallContext& ctx)
{
    static constexpr std::string_view kOpeners[] = {
        "This change handles untrusted input without validating it first.",
        "The previous version passes user-controlled data straight into a sensitive call.",
        "I think this code path can be abused by an attacker.",
        "Security concern: the original logic does not enforce the expected bounds.",
    };
    static constexpr std::string_view kAsks[] = {
        "Please validate and sanitize the value before it is used here.",
        "Could you add an explicit check and reject malformed input?",
        "Consider restricting what reaches this method and failing closed.",
        "We should guard this call and add a regression test for the exploit case.",
    };
    auto h = sha256_hex(config.provider_id + "\x1f" + ctx.prompt_hash + "\x1f" + std::to_string(ctx.turn));
    auto pick = [&](std::size_t at, std::size_t n) { return std::stoul(h.substr(at, 2), nullptr, 16) % n; };
    std::string review = std::string(kOpeners[pick(0, 4)]) + " " + std::string(kAsks[pick(2, 4)]) + " (ref "
                       + h.substr(4, 12) + ")";
    std::string text;
    const auto& last = conversation.back().content;
    if (last.find("\"Final review:\"") != std::string::npos)
        text = "The commit tightens input handling in the changed method.\nFinal review:\n" + review;
    else if (ctx.turn > 0)
        text = "Revised review: " + review;
    else
        text = review;
    return {text, std::nullopt, std::nullopt};
}

ProviderReply HttpProvider::complete(const ProviderConfig& config, std::span<const ChatMessage> conversation,
                                     const CallContext& ctx)
{
    const auto& m = config.mapping;
    json body = m.extra_body.is_object() ? m.extra_body : json::object();
    json messages = json::array();
    for (const auto& msg : conversation)
        messages.push_back({{"role", msg.role}, {"content", msg.content}});
    body[m.model_field] = config.model_name;
    body[m.messages_field] = messages;
    if (!m.temperature_field.empty())
        body[m.temperature_field] = config.temperature;
    if (!m.max_tokens_field.empty())
        body[m.max_tokens_field] = config.max_output_tokens;

    http::Request req;
    req.method = "POST";
    req.url = config.endpoint;
    req.body = body.dump(-1, ' ', false, json::error_handler_t::replace);
    req.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(config.timeout_s * 1000));
    for (const auto& [k, v] : m.extra_headers)
        req.headers.emplace(k, v);
    if (!ctx.credential.empty())
        req.headers.emplace(m.auth_header, m.auth_prefix + ctx.credential);

    auto res = http::send(req);
    if (res.status == 401 || res.status == 403)
        throw Error(ErrorCode::AuthError, config.provider_id + " rejected credentials (HTTP " + std::to_string(res.status) + ")");
    if (res.status == 429) {
        Error e(ErrorCode::RateLimited, config.provider_id + " returned HTTP 429");
        e.http_status = 429;
        e.retry_after_s = http::retry_after_seconds(res);
        throw e;
    }
    if (res.status < 200 || res.status >= 300) {
        Error e(ErrorCode::ProviderError, config.provider_id + " returned HTTP " + std::to_string(res.status));
        e.http_status = res.status;
        e.payload = res.body;
        throw e;
    }
    json parsed = json::parse(res.body, nullptr, false);
    if (parsed.is_discarded()) {
        Error e(ErrorCode::ProviderError, config.provider_id + " returned a non-JSON body");
        e.http_status = res.status;
        e.payload = res.body;
        throw e;
    }
    ProviderReply reply;
    try {
        reply.text = parsed.at(json::json_pointer(m.response_text_pointer)).get<std::string>();
    } catch (const json::exception&) {
        Error e(ErrorCode::ProviderError, config.provider_id + " response lacks " + m.response_text_pointer);
        e.http_status = res.status;
        e.payload = res.body;
        throw e;
    }
    auto read_count = [&](const std::string& ptr) -> std::optional<std::uint64_t> {
        if (ptr.empty())
            return std::nullopt;
        json::json_pointer p(ptr);
        if (!parsed.contains(p) || !parsed.at(p).is_number_unsigned())
            return std::nullopt;
        return parsed.at(p).get<std::uint64_t>();
    };
    reply.input_tokens = read_count(m.input_tokens_pointer);
    reply.output_tokens = read_count(m.output_tokens_pointer);
    return reply;
}

// --- gateway -----------------------------------------------------------------

struct Gateway::Slot {
    ProviderConfig config;
    std::unique_ptr<Provider> impl;
    Semaphore in_flight;
    TokenBucket bucket;
    std::atomic<std::uint64_t> calls{0};

    Slot(ProviderConfig c, std::unique_ptr<Provider> p)
        : config(std::move(c)), impl(std::move(p)), in_flight(config.max_concurrency),
          bucket(config.requests_per_minute / 60.0, std::max<double>(1.0, config.requests_per_minute / 60.0))
    {
    }
};

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {}
Gateway::~Gateway() = default;

void Gateway::register_provider(const ProviderConfig& config, std::unique_ptr<Provider> impl)
{
    config.validate();
    if (!impl) {
        if (config.kind == "mock")
            impl = std::make_unique<MockProvider>();
        else
            impl = std::make_unique<HttpProvider>();
    }
    std::lock_guard lock(mu_);
    if (slots_.count(config.provider_id))
        throw Error(ErrorCode::DuplicateProvider, "provider '" + config.provider_id + "' already registered");
    slots_.emplace(config.provider_id, std::make_unique<Slot>(config, std::move(impl)));
}

std::vector<std::string> Gateway::providers() const
{
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : slots_)
        out.push_back(id);
    return out;
}

Gateway::Slot& Gateway::slot(const std::string& provider_id) const
{
    std::lock_guard lock(mu_);
    auto it = slots_.find(provider_id);
    if (it == slots_.end())
        throw Error(ErrorCode::UnknownProvider, "provider '" + provider_id + "' is not registered");
    return *it->second;
}

const ProviderConfig& Gateway::config(const std::string& provider_id) const
{
    return slot(provider_id).config;
}

std::size_t Gateway::max_in_flight(const std::string& provider_id) const
{
    return slot(provider_id).in_flight.high_water();
}

std::uint64_t Gateway::network_calls(const std::string& provider_id) const
{
    return slot(provider_id).calls.load();
}

std::filesystem::path Gateway::cache_path(const ProviderConfig& c, const std::string& prompt_hash) const
{
    return *options_.cache_dir / slug(c.provider_id) / fmt::format("{}@t{}", slug(c.model_name), c.temperature)
         / (prompt_hash + ".json");
}

std::optional<GenerationResult> Gateway::cache_lookup(const Slot& s, const std::string& prompt_hash)
{
    if (!options_.cache_dir) {
        std::lock_guard lock(mu_);
        auto key = fmt::format("{}\x1f{}\x1f{}\x1f{}", s.config.provider_id, s.config.model_name,
                               s.config.temperature, prompt_hash);
        auto it = memory_cache_.find(key);
        if (it == memory_cache_.end())
            return std::nullopt;
        return it->second;
    }
    auto path = cache_path(s.config, prompt_hash);
    if (!std::filesystem::exists(path))
        return std::nullopt;
    auto parsed = json::parse(read_file(path), nullptr, false);
    if (parsed.is_discarded())
        return std::nullopt;  // torn or foreign file; regenerate over it
    return GenerationResult::from_json(parsed);
}

void Gateway::cache_store(const Slot& s, const GenerationResult& r)
{
    if (!options_.cache_dir) {
        std::lock_guard lock(mu_);
        auto key = fmt::format("{}\x1f{}\x1f{}\x1f{}", s.config.provider_id, s.config.model_name,
                               s.config.temperature, r.prompt_hash);
        memory_cache_[key] = r;
        return;
    }
    write_file_atomic(cache_path(s.config, r.prompt_hash),
                      r.to_json().dump(2, ' ', false, json::error_handler_t::replace) + "\n");
}

ProviderReply Gateway::call_with_retry(Slot& s, std::span<const ChatMessage> conversation, const CallContext& ctx,
                                       std::uint32_t& retries)
{
    for (std::uint32_t attempt = 0;; ++attempt) {
        try {
            s.bucket.acquire();
            SemaphoreGuard guard(s.in_flight);
            ++s.calls;
            return s.impl->complete(s.config, conversation, ctx);
        } catch (const Error& e) {
            if (!is_transient(e) || attempt >= s.config.max_retries)
                throw;
            ++retries;
            auto backoff = std::min<std::uint64_t>(s.config.backoff_cap_ms,
                                                   static_cast<std::uint64_t>(s.config.backoff_base_ms) << std::min(attempt, 20u));
            if (e.retry_after_s)
                backoff = std::max<std::uint64_t>(backoff, static_cast<std::uint64_t>(*e.retry_after_s * 1000));
            options_.sleep(std::chrono::milliseconds(backoff));
        }
    }
}

GenerationResult Gateway::generate(const GenerationRequest& request)
{
    Slot& s = slot(request.provider_id);
    if (request.plan.turns.empty())
        throw Error(ErrorCode::ProviderError, "empty prompt plan");
    if (s.config.max_prompt_chars > 0 && request.plan.size_chars() > s.config.max_prompt_chars)
        throw Error(ErrorCode::PromptTooLarge, fmt::format("prompt is {} chars, provider '{}' accepts {}",
                                                           request.plan.size_chars(), s.config.provider_id,
                                                           s.config.max_prompt_chars));
    const auto prompt_hash = request.plan.hash();

    // Serialize identical requests so a key reaches the network at most once.
    std::shared_ptr<std::mutex> key_lock;
    {
        std::lock_guard lock(mu_);
        auto& l = key_locks_[request.provider_id + "\x1f" + prompt_hash];
        if (!l)
            l = std::make_shared<std::mutex>();
        key_lock = l;
    }
    std::lock_guard key_guard(*key_lock);

    if (auto hit = cache_lookup(s, prompt_hash)) {
        hit->from_cache = true;
        hit->commit_ref = request.commit_ref;
        hit->strategy = request.strategy;
        hit->template_version = request.template_version;
        return *hit;
    }

    CallContext ctx;
    ctx.prompt_hash = prompt_hash;
    if (!s.config.auth_env_var.empty()) {
        const char* v = std::getenv(s.config.auth_env_var.c_str());
        if (!v || !*v)
            throw Error(ErrorCode::AuthError, "environment variable " + s.config.auth_env_var + " is not set");
        ctx.credential = v;
    }

    GenerationResult r;
    r.commit_ref = request.commit_ref;
    r.provider_id = s.config.provider_id;
    r.model_name = s.config.model_name;
    r.strategy = request.strategy;
    r.template_version = request.template_version;
    r.prompt_hash = prompt_hash;

    const auto start = options_.clock->steady_ms();
    std::vector<ChatMessage> conversation;
    std::uint64_t in_tokens = 0, out_tokens = 0;
    bool reported = true;
    std::uint64_t approx_in = 0, approx_out = 0;
    for (std::size_t t = 0; t < request.plan.turns.size(); ++t) {
        std::optional<std::string_view> prior;
        if (!r.turn_responses.empty())
            prior = r.turn_responses.back();
        auto text = request.plan.turns[t].render(prior);
        approx_in += whitespace_tokens(text);
        conversation.push_back({"user", std::move(text)});
        ctx.turn = t;
        auto reply = call_with_retry(s, conversation, ctx, r.retry_count);
        approx_out += whitespace_tokens(reply.text);
        if (reply.input_tokens && reply.output_tokens) {
            in_tokens += *reply.input_tokens;
            out_tokens += *reply.output_tokens;
        } else {
            reported = false;
        }
        conversation.push_back({"assistant", reply.text});
        r.turn_responses.push_back(std::move(reply.text));
    }
    r.latency_ms = options_.clock->steady_ms() - start;
    r.response_text = r.turn_responses.back();
    r.final_review = prompts::extract_final_review(r.response_text);
    if (reported)
        r.token_counts = {in_tokens, out_tokens, false};
    else
        r.token_counts = {approx_in, approx_out, true};
    r.created_at = options_.clock->now_utc();
    r.from_cache = false;

    cache_store(s, r);
    return r;
}

GenerationResult Gateway::generate(const std::string& provider_id, const std::vector<std::string>& turns)
{
    GenerationRequest req;
    req.provider_id = provider_id;
    req.plan = prompts::PromptPlan::from_texts(turns);
    return generate(req);
}

} // namespace synrev::llm
