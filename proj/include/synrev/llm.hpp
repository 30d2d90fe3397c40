#pragma once

#include <synrev/prompts.hpp>
#include <synrev/ratelimit.hpp>
#include <synrev/records.hpp>
#include <synrev/util.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace synrev::llm {

/// How a chat-style HTTP API lays out its request and response JSON.
struct FieldMapping {
    std::string model_field = "model";
    std::string messages_field = "messages";
    std::string temperature_field = "temperature";
    std::string max_tokens_field = "max_tokens";
    std::string response_text_pointer = "/choices/0/message/content";
    std::string input_tokens_pointer = "/usage/prompt_tokens";
    std::string output_tokens_pointer = "/usage/completion_tokens";
    std::string auth_header = "Authorization";
    std::string auth_prefix = "Bearer ";
    std::map<std::string, std::string> extra_headers;
    json extra_body = json::object();

    json to_json() const;
    static FieldMapping from_json(const json& j);
};

struct ProviderConfig {
    std::string provider_id;
    std::string kind = "mock";  // "mock" or "http"
    std::string endpoint;
    std::string model_name;
    std::string auth_env_var;
    std::uint32_t max_concurrency = 1;
    std::uint32_t requests_per_minute = 0;  // 0 = unlimited
    double temperature = 0.0;
    std::uint32_t max_output_tokens = 1024;
    std::uint64_t max_prompt_chars = 0;  // 0 = no limit
    double timeout_s = 120.0;
    std::uint32_t max_retries = 5;
    std::uint32_t backoff_base_ms = 500;
    std::uint32_t backoff_cap_ms = 60000;
    FieldMapping mapping;

    void validate() const;
    json to_json() const;
    /// Strict: unknown keys are a ConfigError.
    static ProviderConfig from_json(const json& j);
};

struct CommitRef {
    std::string repo;
    std::string sha;

    bool operator==(const CommitRef&) const = default;
    auto operator<=>(const CommitRef&) const = default;
};

struct TokenCounts {
    std::uint64_t input = 0;
    std::uint64_t output = 0;
    bool approximate = false;

    bool operator==(const TokenCounts&) const = default;
};

struct GenerationResult {
    CommitRef commit_ref;
    std::string provider_id;
    std::string model_name;
    std::string strategy;
    std::string template_version;
    std::string prompt_hash;
    std::string response_text;  // last turn's response
    std::string final_review;   // response_text with any reasoning preamble stripped
    std::vector<std::string> turn_responses;
    std::int64_t latency_ms = 0;
    TokenCounts token_counts;
    std::uint32_t retry_count = 0;
    std::string created_at;
    bool from_cache = false;

    json to_json() const;
    static GenerationResult from_json(const json& j);
    bool operator==(const GenerationResult&) const = default;
};

struct ChatMessage {
    std::string role;  // "user" or "assistant"
    std::string content;
};

struct ProviderReply {
    std::string text;
    std::optional<std::uint64_t> input_tokens;
    std::optional<std::uint64_t> output_tokens;
};

struct CallContext {
    std::string prompt_hash;
    std::size_t turn = 0;  // zero-based
    std::string credential;
};

/// One backend. Implementations throw synrev::Error; RateLimited, Timeout,
/// HostUnavailable and 5xx ProviderErrors are retried by the gateway.
class Provider {
public:
    virtual ~Provider() = default;
    virtual ProviderReply complete(const ProviderConfig& config, std::span<const ChatMessage> conversation,
                                   const CallContext& ctx) = 0;
};

/// Deterministic offline provider: each reply is a function of the prompt hash,
/// turn index and provider id only.
class MockProvider final : public Provider {
public:
    ProviderReply complete(const ProviderConfig& config, std::span<const ChatMessage> conversation,
                           const CallContext& ctx) override;
};

/// Chat-completions style JSON over HTTP(S), laid out per FieldMapping.
class HttpProvider final : public Provider {
public:
    ProviderReply complete(const ProviderConfig& config, std::span<const ChatMessage> conversation,
                           const CallContext& ctx) override;
};

struct GenerationRequest {
    std::string provider_id;
    prompts::PromptPlan plan;
    CommitRef commit_ref;
    std::string strategy;
    std::string template_version;
};

struct GatewayOptions {
    std::optional<std::filesystem::path> cache_dir;  // in-memory cache when unset
    std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>();
    SleepFn sleep = real_sleep;
};

/// Uniform, rate-limited, cached access to registered providers. Safe for
/// concurrent callers.
class Gateway {
public:
    explicit Gateway(GatewayOptions options = {});
    ~Gateway();

    /// Throws DuplicateProvider. A null impl picks one from config.kind.
    void register_provider(const ProviderConfig& config, std::unique_ptr<Provider> impl = nullptr);
    std::vector<std::string> providers() const;
    const ProviderConfig& config(const std::string& provider_id) const;

    /// Sends each turn with the previous turns as context. Cache hits return the
    /// stored result with from_cache = true. Results are persisted before return.
    GenerationResult generate(const GenerationRequest& request);
    GenerationResult generate(const std::string& provider_id, const std::vector<std::string>& turns);

    /// Largest number of simultaneous in-flight calls observed for a provider.
    std::size_t max_in_flight(const std::string& provider_id) const;
    /// Calls that reached the provider (cache misses, including retries).
    std::uint64_t network_calls(const std::string& provider_id) const;

private:
    struct Slot;
    Slot& slot(const std::string& provider_id) const;
    std::optional<GenerationResult> cache_lookup(const Slot& s, const std::string& prompt_hash);
    void cache_store(const Slot& s, const GenerationResult& r);
    std::filesystem::path cache_path(const ProviderConfig& c, const std::string& prompt_hash) const;
    ProviderReply call_with_retry(Slot& s, std::span<const ChatMessage> conversation, const CallContext& ctx,
                                  std::uint32_t& retries);

    GatewayOptions options_;
    mutable std::mutex mu_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
    std::map<std::string, GenerationResult> memory_cache_;
    std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
};

} // namespace synrev::llm
