#include "support.hpp"

#include <doctest.h>
#include <httplib.h>
#include <synrev/llm.hpp>
#include <synrev/prompts.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace synrev;
using namespace synrev::prompts;
using namespace synrev::llm;
using testsupport::error_of;

namespace {

// Minimal chat endpoint on an ephemeral port. The handler decides per request.
class FakeEndpoint {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&, int call)>;

    explicit FakeEndpoint(Handler h) : handler_(std::move(h))
    {
        server_.Post("/v1/chat", [this](const httplib::Request& req, httplib::Response& res) {
            int n = calls_++;
            {
                std::lock_guard lock(mu_);
                bodies_.push_back(req.body);
                auths_.push_back(req.get_header_value("Authorization"));
            }
            handler_(req, res, n);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint()
    {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat"; }
    int calls() const { return calls_; }
    std::string body(std::size_t i)
    {
        std::lock_guard lock(mu_);
        return bodies_.at(i);
    }
    std::string auth(std::size_t i)
    {
        std::lock_guard lock(mu_);
        return auths_.at(i);
    }

private:
    Handler handler_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::atomic<int> calls_{0};
    std::mutex mu_;
    std::vector<std::string> bodies_, auths_;
};

void ok_reply(httplib::Response& res, const std::string& text)
{
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                         {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 7}}}}
                        .dump(),
                    "application/json");
}

ProviderConfig http_config(const std::string& url)
{
    ProviderConfig c;
    c.provider_id = "remote";
    c.kind = "http";
    c.endpoint = url;
    c.model_name = "m-1";
    c.auth_env_var = "SYNREV_TEST_KEY";
    c.max_retries = 5;
    c.backoff_base_ms = 100;
    c.backoff_cap_ms = 1000;
    c.timeout_s = 5;
    return c;
}

struct SleepLog {
    std::mutex mu;
    std::vector<std::chrono::milliseconds> sleeps;
    SleepFn fn()
    {
        return [this](std::chrono::milliseconds d) {
            std::lock_guard lock(mu);
            sleeps.push_back(d);
        };
    }
};

class SlowProvider final : public Provider {
public:
    std::atomic<int> in_flight{0}, peak{0}, calls{0};
    ProviderReply complete(const ProviderConfig&, std::span<const ChatMessage> conv, const CallContext&) override
    {
        ++calls;
        int now = ++in_flight;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(15));
        --in_flight;
        return {"echo " + std::to_string(conv.back().content.size()), 3, 4};
    }
};

PromptPlan sample_plan(Strategy s, const std::string& diff = "@@ -1 +1 @@\n-a\n+b")
{
    return plan(builtin_template(s), diff, "Fix overflow");
}

} // namespace

TEST_SUITE("prompts")
{
    TEST_CASE("zero-shot template is the published instruction")
    {
        auto t = builtin_template(Strategy::ZeroShot);
        REQUIRE(t.turns.size() == 1);
        CHECK(t.turns[0] == kZeroShotPrompt);
        auto r = render(t, "DIFF", "MSG");
        REQUIRE(r.size() == 1);
        CHECK(r[0]
              == "Given this diff hunk \"DIFF\" and this commit message \"MSG\" belonging to a commit that addresses a "
                 "vulnerability. Generate a code review that could have led to making said commit in the first "
                 "place. Write it like a reviewer who found a vulnerability on the code.");
    }

    TEST_CASE("strategies and turn structure")
    {
        CHECK(list_strategies() == std::vector<Strategy>{Strategy::ZeroShot, Strategy::ChainOfThought,
                                                         Strategy::SelfReflection});
        CHECK(strategy_from_string("self_reflection") == Strategy::SelfReflection);
        CHECK(to_string(Strategy::ChainOfThought) == "chain_of_thought");
        CHECK(error_of([] { strategy_from_string("few_shot"); }) == ErrorCode::ConfigError);

        auto sr = builtin_template(Strategy::SelfReflection);
        CHECK(sr.turns.size() == 2);
        // without a prior response only the first turn renders
        CHECK(render(sr, "d", "m").size() == 1);
        auto both = render(sr, "d", "m", std::string_view("first draft"));
        REQUIRE(both.size() == 2);
        CHECK(both[1].find("\"first draft\"") != std::string::npos);
    }

    TEST_CASE("substitution is literal")
    {
        auto t = builtin_template(Strategy::ZeroShot);
        auto r = render_turn(t, 0, "x = \"{{Message}}\" $1 \\n", "m");
        CHECK(r.find("x = \"{{Message}}\" $1 \\n") != std::string::npos);
    }

    TEST_CASE("placeholder errors")
    {
        auto t = builtin_template(Strategy::ZeroShot);
        CHECK(error_of([&] { render_turn(t, 0, "", "m"); }) == ErrorCode::MissingPlaceholderValue);
        CHECK(error_of([&] { render_turn(t, 0, "d", ""); }) == ErrorCode::MissingPlaceholderValue);
        auto sr = builtin_template(Strategy::SelfReflection);
        CHECK(error_of([&] { render_turn(sr, 1, "d", "m"); }) == ErrorCode::MissingPlaceholderValue);

        CHECK(error_of([] { parse_template("---\nstrategy: zero_shot\nversion: 1\n---\nhello {{Dif}}"); })
              == ErrorCode::UnknownPlaceholder);
        // the first turn cannot depend on a prior response
        CHECK(error_of([] {
                  parse_template("---\nstrategy: self_reflection\nversion: 1\n---\n{{PriorResponse}}\n=== turn "
                                 "===\n{{Diff}}");
              })
              == ErrorCode::TemplateError);
        CHECK(error_of([] { parse_template("no front matter"); }) == ErrorCode::TemplateError);
    }

    TEST_CASE("template file round trip and versioning")
    {
        for (auto s : list_strategies()) {
            auto t = builtin_template(s);
            auto back = parse_template(serialize_template(t));
            CHECK(back.turns == t.turns);
            CHECK(back.template_version() == t.template_version());
        }
        auto t = builtin_template(Strategy::ZeroShot);
        auto v = t.template_version();
        CHECK(v.rfind("1+", 0) == 0);
        t.turns[0] += " ";
        CHECK(t.template_version() != v);
    }

    TEST_CASE("shipped template files equal the built-ins")
    {
        TemplateSet files(std::filesystem::path(SYNREV_SOURCE_DIR) / "templates");
        for (auto s : list_strategies())
            CHECK(files.get(s).template_version() == builtin_template(s).template_version());
    }

    TEST_CASE("template directory overrides and reloads")
    {
        testsupport::TempDir dir("tmpl");
        TemplateSet set(dir.path());
        CHECK(set.get(Strategy::ZeroShot).turns[0] == kZeroShotPrompt);
        testsupport::write_text(dir / "zs.tmpl", "---\nstrategy: zero_shot\nversion: 7\n---\nReview {{Diff}} / {{Message}}");
        set.reload();
        CHECK(set.get(Strategy::ZeroShot).version == "7");
        CHECK(render(set.get(Strategy::ZeroShot), "d", "m")[0] == "Review d / m");
        testsupport::write_text(dir / "zs2.tmpl", "---\nstrategy: zero_shot\nversion: 8\n---\n{{Diff}}");
        CHECK(error_of([&] { set.reload(); }) == ErrorCode::TemplateError);
    }

    TEST_CASE("prompt hash")
    {
        auto a = sample_plan(Strategy::ZeroShot);
        CHECK(a.hash().size() == 64);
        CHECK(a.hash() == sample_plan(Strategy::ZeroShot).hash());
        CHECK(a.hash() != sample_plan(Strategy::ZeroShot, "@@ -1 +1 @@\n-a\n+c").hash());
        CHECK(a.hash() != sample_plan(Strategy::ChainOfThought).hash());
        CHECK(sample_plan(Strategy::SelfReflection).turns.size() == 2);
        CHECK(sample_plan(Strategy::SelfReflection).turns[1].needs_prior());
    }

    TEST_CASE("final review extraction")
    {
        CHECK(extract_final_review("  just this  ") == "just this");
        CHECK(extract_final_review("step 1\nstep 2\nFinal review:\nThe length is unchecked.") == "The length is unchecked.");
        CHECK(extract_final_review("**Final review:** use bounds") == "use bounds");
        CHECK(extract_final_review("a\nFinal review: one\nFinal review: two") == "two");
        // a mention in prose is not a marker
        CHECK(extract_final_review("I will write the final review: soon") == "I will write the final review: soon");
    }
}

TEST_SUITE("llm")
{
    TEST_CASE("provider config is strict")
    {
        auto j = json{{"provider_id", "p"}, {"kind", "mock"}};
        auto c = ProviderConfig::from_json(j);
        CHECK(c.model_name == "mock-p");
        j["temprature"] = 0.2;
        CHECK(error_of([&] { ProviderConfig::from_json(j); }) == ErrorCode::ConfigError);
        CHECK(error_of([] { ProviderConfig::from_json({{"provider_id", "h"}, {"kind", "http"}, {"endpoint", "ftp://x"}}); })
              == ErrorCode::ConfigError);
        CHECK(error_of([] { ProviderConfig::from_json({{"provider_id", "h"}, {"kind", "grpc"}}); })
              == ErrorCode::ConfigError);
    }

    TEST_CASE("registration")
    {
        Gateway g;
        ProviderConfig c;
        c.provider_id = "a";
        g.register_provider(c);
        CHECK(error_of([&] { g.register_provider(c); }) == ErrorCode::DuplicateProvider);
        CHECK(error_of([&] { g.generate("zzz", {"hi"}); }) == ErrorCode::UnknownProvider);
        CHECK(g.providers() == std::vector<std::string>{"a"});
    }

    TEST_CASE("mock provider is deterministic and strategy-aware")
    {
        Gateway g1, g2;
        ProviderConfig c;
        c.provider_id = "mock-a";
        g1.register_provider(c);
        g2.register_provider(c);
        GenerationRequest req{"mock-a", sample_plan(Strategy::ChainOfThought), {"o/r", std::string(40, 'a')},
                              "chain_of_thought", "1+x"};
        auto a = g1.generate(req);
        auto b = g2.generate(req);
        CHECK(a.response_text == b.response_text);
        CHECK(a.response_text.find("Final review:") != std::string::npos);
        CHECK(a.final_review.find("Final review") == std::string::npos);
        CHECK_FALSE(a.final_review.empty());
        CHECK(a.token_counts.approximate);

        req.plan = sample_plan(Strategy::SelfReflection);
        auto sr = g1.generate(req);
        CHECK(sr.turn_responses.size() == 2);
        CHECK(sr.response_text.rfind("Revised review: ", 0) == 0);

        ProviderConfig other;
        other.provider_id = "mock-b";
        g1.register_provider(other);
        req.provider_id = "mock-b";
        CHECK(g1.generate(req).response_text != sr.response_text);
    }

    TEST_CASE("cache hit skips the network and survives restarts")
    {
        testsupport::TempDir dir("cache");
        GenerationRequest req{"s", sample_plan(Strategy::ZeroShot), {"o/r", std::string(40, 'b')}, "zero_shot", "1+y"};
        GenerationResult first;
        {
            GatewayOptions o;
            o.cache_dir = dir.path();
            Gateway g(o);
            auto slow = std::make_unique<SlowProvider>();
            auto* raw = slow.get();
            ProviderConfig c;
            c.provider_id = "s";
            g.register_provider(c, std::move(slow));
            first = g.generate(req);
            CHECK_FALSE(first.from_cache);
            CHECK(first.token_counts == TokenCounts{
                      static_cast<std::uint64_t>(3), static_cast<std::uint64_t>(4), false});
            auto again = g.generate(req);
            CHECK(again.from_cache);
            CHECK(again.response_text == first.response_text);
            CHECK(raw->calls == 1);
            CHECK(g.network_calls("s") == 1);
        }
        GatewayOptions o;
        o.cache_dir = dir.path();
        Gateway g(o);
        auto slow = std::make_unique<SlowProvider>();
        auto* raw = slow.get();
        ProviderConfig c;
        c.provider_id = "s";
        g.register_provider(c, std::move(slow));
        auto r = g.generate(req);
        CHECK(r.from_cache);
        CHECK(raw->calls == 0);
        r.from_cache = false;
        CHECK(r == first);
    }

    TEST_CASE("concurrency cap holds and identical requests hit the network once")
    {
        Gateway g;
        auto slow = std::make_unique<SlowProvider>();
        auto* raw = slow.get();
        ProviderConfig c;
        c.provider_id = "s";
        c.max_concurrency = 3;
        g.register_provider(c, std::move(slow));

        std::vector<std::thread> threads;
        for (int t = 0; t < 12; ++t)
            threads.emplace_back([&, t] {
                for (int k = 0; k < 4; ++k)
                    g.generate("s", {"prompt " + std::to_string(t * 10 + k)});
            });
        for (auto& th : threads)
            th.join();
        CHECK(raw->peak <= 3);
        CHECK(g.max_in_flight("s") <= 3);
        CHECK(g.max_in_flight("s") >= 2);
        CHECK(raw->calls == 48);

        std::atomic<int> cached{0};
        threads.clear();
        for (int t = 0; t < 8; ++t)
            threads.emplace_back([&] {
                if (g.generate("s", {"same prompt"}).from_cache)
                    ++cached;
            });
        for (auto& th : threads)
            th.join();
        CHECK(raw->calls == 49);
        CHECK(cached == 7);
    }

    TEST_CASE("http provider: 429 three times then success")
    {
        ::setenv("SYNREV_TEST_KEY", "sekret", 1);
        FakeEndpoint ep([](const httplib::Request&, httplib::Response& res, int call) {
            if (call < 3) {
                res.status = 429;
                res.set_header("Retry-After", "2");
                res.set_content("{\"error\":\"slow down\"}", "application/json");
                return;
            }
            ok_reply(res, "Reasoning.\nFinal review:\nCheck the bounds.");
        });
        SleepLog log;
        GatewayOptions o;
        o.sleep = log.fn();
        Gateway g(o);
        g.register_provider(http_config(ep.url()));
        auto r = g.generate("remote", {"hello"});
        CHECK(ep.calls() == 4);
        CHECK(r.retry_count == 3);
        CHECK(r.final_review == "Check the bounds.");
        CHECK(r.token_counts == TokenCounts{11, 7, false});
        CHECK(r.model_name == "m-1");
        REQUIRE(log.sleeps.size() == 3);
        for (auto d : log.sleeps)
            CHECK(d >= std::chrono::milliseconds(2000));

        auto body = json::parse(ep.body(0));
        CHECK(body["model"] == "m-1");
        CHECK(body["messages"][0]["role"] == "user");
        CHECK(body["messages"][0]["content"] == "hello");
        CHECK(body["temperature"] == 0.0);
        CHECK(ep.auth(0) == "Bearer sekret");
    }

    TEST_CASE("http provider: server errors back off exponentially, client errors do not retry")
    {
        ::setenv("SYNREV_TEST_KEY", "sekret", 1);
        FakeEndpoint ep([](const httplib::Request& req, httplib::Response& res, int call) {
            auto body = json::parse(req.body);
            auto prompt = body["messages"][0]["content"].get<std::string>();
            if (prompt == "bad") {
                res.status = 400;
                res.set_content("{\"error\":\"bad request\"}", "application/json");
            } else if (prompt == "auth") {
                res.status = 401;
            } else if (call < 2) {
                res.status = 503;
            } else {
                ok_reply(res, "fine");
            }
        });
        SleepLog log;
        GatewayOptions o;
        o.sleep = log.fn();
        Gateway g(o);
        g.register_provider(http_config(ep.url()));
        auto r = g.generate("remote", {"good"});
        CHECK(r.response_text == "fine");
        REQUIRE(log.sleeps.size() == 2);
        CHECK(log.sleeps[0] == std::chrono::milliseconds(100));
        CHECK(log.sleeps[1] == std::chrono::milliseconds(200));

        try {
            g.generate("remote", {"bad"});
            FAIL("expected ProviderError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ProviderError);
            CHECK(e.http_status == 400);
            CHECK(e.payload.find("bad request") != std::string::npos);
        }
        CHECK(log.sleeps.size() == 2);
        CHECK(error_of([&] { g.generate("remote", {"auth"}); }) == ErrorCode::AuthError);
    }

    TEST_CASE("http provider: retries are bounded")
    {
        ::setenv("SYNREV_TEST_KEY", "sekret", 1);
        FakeEndpoint ep([](const httplib::Request&, httplib::Response& res, int) { res.status = 502; });
        SleepLog log;
        GatewayOptions o;
        o.sleep = log.fn();
        Gateway g(o);
        auto c = http_config(ep.url());
        c.max_retries = 2;
        g.register_provider(c);
        CHECK(error_of([&] { g.generate("remote", {"x"}); }) == ErrorCode::ProviderError);
        CHECK(ep.calls() == 3);
    }

    TEST_CASE("http provider: missing credential and timeout")
    {
        FakeEndpoint ep([](const httplib::Request&, httplib::Response& res, int) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1500));
            ok_reply(res, "late");
        });
        Gateway g;
        auto c = http_config(ep.url());
        c.auth_env_var = "SYNREV_TEST_UNSET_KEY";
        ::unsetenv("SYNREV_TEST_UNSET_KEY");
        g.register_provider(c);
        CHECK(error_of([&] { g.generate("remote", {"x"}); }) == ErrorCode::AuthError);
        CHECK(ep.calls() == 0);

        auto t = http_config(ep.url());
        t.provider_id = "slow";
        t.auth_env_var.clear();
        t.timeout_s = 0.3;
        t.max_retries = 0;
        g.register_provider(t);
        CHECK(error_of([&] { g.generate("slow", {"x"}); }) == ErrorCode::Timeout);
    }

    TEST_CASE("prompt size guard")
    {
        Gateway g;
        ProviderConfig c;
        c.provider_id = "small";
        c.max_prompt_chars = 10;
        g.register_provider(c);
        CHECK(error_of([&] { g.generate("small", {std::string(11, 'x')}); }) == ErrorCode::PromptTooLarge);
        CHECK_NOTHROW(g.generate("small", {std::string(10, 'x')}));
    }

    TEST_CASE("generation result json round trip")
    {
        Gateway g;
        ProviderConfig c;
        c.provider_id = "m";
        g.register_provider(c);
        GenerationRequest req{"m", sample_plan(Strategy::SelfReflection), {"o/r", std::string(40, 'c')},
                              "self_reflection", "1+z"};
        auto r = g.generate(req);
        CHECK(GenerationResult::from_json(r.to_json()) == r);
        auto j = r.to_json();
        j.erase("prompt_hash");
        CHECK(error_of([&] { GenerationResult::from_json(j); }) == ErrorCode::SchemaError);
    }
}
