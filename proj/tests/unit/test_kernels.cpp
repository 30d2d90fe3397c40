#include "support.hpp"

#include <doctest.h>
#include <synrev/kernels.hpp>

#include <cstring>

using namespace synrev;
using namespace synrev::kernels;

namespace {

std::vector<CommitRecord> mixed_commits(std::size_t n)
{
    const char* paths[] = {"src/main/java/A.java", "src/test/java/ATest.java", "README.md", "src/B.java"};
    std::vector<CommitRecord> out;
    StableRng rng(99);
    for (std::size_t i = 0; i < n; ++i) {
        CommitRecord c;
        c.repo_ref = "acme/x";
        c.sha = testsupport::fake_sha("k" + std::to_string(i));
        c.message = "change " + std::to_string(i);
        c.parent_count = static_cast<std::uint32_t>(1 + rng.below(4) / 3);
        auto files = 1 + rng.below(3) / 2;
        for (std::uint64_t f = 0; f < files; ++f)
            c.changed_files.push_back({paths[rng.below(4)], ChangeKind::Modified});
        out.push_back(std::move(c));
    }
    return out;
}

bool same_bits(double a, double b)
{
    return std::memcmp(&a, &b, sizeof a) == 0;
}

} // namespace

TEST_SUITE("kernels")
{
    TEST_CASE("candidacy batch equals serial")
    {
        auto commits = mixed_commits(5000);
        diffkit::CandidacyPolicy policy;
        auto par = judge_batch(commits, policy);
        auto ser = judge_batch_serial(commits, policy);
        CHECK(par == ser);
        REQUIRE(ser.size() == commits.size());
        for (std::size_t i = 0; i < commits.size(); i += 97)
            CHECK(ser[i] == diffkit::judge_candidacy(commits[i], policy));
        CHECK(max_threads() >= 1);
    }

    TEST_CASE("keyword batch equals serial")
    {
        std::vector<std::string> kws{"xss", "sql injection", "overflow", "leak"};
        keywords::Matcher m(kws);
        std::vector<std::string> texts;
        const char* parts[] = {"Fix XSS", "sql  injection", "no match here", "memory leak and overflow", "xssfoo"};
        for (int i = 0; i < 3000; ++i)
            texts.push_back(std::string(parts[i % 5]) + " #" + std::to_string(i));
        auto par = match_batch(m, texts);
        CHECK(par == match_batch_serial(m, texts));
        CHECK(par[0] == std::vector<std::string>{"xss"});
        CHECK(par[2].empty());
        CHECK(par[4].empty());
    }

    TEST_CASE("bleu batch equals serial bit for bit")
    {
        std::vector<metrics::EvalPair> pairs;
        for (int i = 0; i < 2000; ++i)
            pairs.push_back({"use strncpy instead of strcpy " + std::to_string(i % 13),
                             "please use strncpy instead of strcpy to avoid overflow " + std::to_string(i % 7)});
        pairs.push_back({"   ", "something"});
        auto par = bleu_batch(pairs);
        auto ser = bleu_batch_serial(pairs);
        REQUIRE(par.size() == ser.size());
        for (std::size_t i = 0; i < par.size(); ++i) {
            CHECK(same_bits(par[i].score.score, ser[i].score.score));
            CHECK(par[i].stats.matches == ser[i].stats.matches);
            CHECK(par[i].stats.totals == ser[i].stats.totals);
        }
        CHECK(ser.back().score.score == 0.0);
    }

    TEST_CASE("empty batches")
    {
        std::vector<CommitRecord> none;
        CHECK(judge_batch(none, {}).empty());
        std::vector<metrics::EvalPair> np;
        CHECK(bleu_batch(np).empty());
    }
}
