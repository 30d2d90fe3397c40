// Times each OpenMP batch kernel against its serial twin on synthetic input and
// checks the two agree. Usage: bench_kernels [items] [repeats]

#include <synrev/kernels.hpp>
#include <synrev/util.hpp>

#include <fmt/format.h>

#include <chrono>
#include <cstdlib>
#include <string>
#include <vector>

using namespace synrev;

namespace {

template <class F>
double best_ms(int repeats, F&& f)
{
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, std::size_t n, double serial, double parallel, bool agree)
{
    fmt::print("{:<10} {:>8} {:>12.2f} {:>12.2f} {:>8.2f}x  {}\n", name, n, serial, parallel, serial / parallel,
               agree ? "match" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv)
{
    std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 200000;
    int repeats = argc > 2 ? std::atoi(argv[2]) : 3;
    StableRng rng(2024);

    const char* paths[] = {"src/main/java/org/a/Foo.java", "src/test/java/org/a/FooTest.java", "docs/README.md",
                           "src/main/java/org/a/Bar.java"};
    std::vector<CommitRecord> commits(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& c = commits[i];
        c.sha = std::string(40, '0');
        c.parent_count = rng.below(10) == 0 ? 2 : 1;
        auto files = 1 + rng.below(3) / 2;
        for (std::uint64_t f = 0; f < files; ++f)
            c.changed_files.push_back({paths[rng.below(4)], ChangeKind::Modified});
    }

    const char* words[] = {"fix",    "xss",     "in",   "parser", "sql",   "injection", "refactor", "buffer",
                           "overflow", "update", "docs", "path",   "traversal", "null", "check", "security"};
    std::vector<std::string> messages(n);
    for (auto& m : messages)
        for (int w = 0; w < 12; ++w)
            m += std::string(words[rng.below(16)]) + " ";

    std::vector<metrics::EvalPair> pairs(n / 10);
    for (auto& p : pairs)
        for (int w = 0; w < 40; ++w) {
            p.generated += std::string(words[rng.below(16)]) + " ";
            p.ground_truth += std::string(words[rng.below(16)]) + " ";
        }

    std::vector<std::string> kws{"xss", "sql injection", "buffer overflow", "path traversal", "security", "null check"};
    keywords::Matcher matcher(kws);
    diffkit::CandidacyPolicy policy;

    fmt::print("threads: {}\n{:<10} {:>8} {:>12} {:>12} {:>9}\n", kernels::max_threads(), "kernel", "items",
               "serial ms", "parallel ms", "speedup");

    std::vector<diffkit::CandidacyVerdict> js, jp;
    double s = best_ms(repeats, [&] { js = kernels::judge_batch_serial(commits, policy); });
    double p = best_ms(repeats, [&] { jp = kernels::judge_batch(commits, policy); });
    row("candidacy", n, s, p, js == jp);

    std::vector<std::vector<std::string>> ms, mp;
    s = best_ms(repeats, [&] { ms = kernels::match_batch_serial(matcher, messages); });
    p = best_ms(repeats, [&] { mp = kernels::match_batch(matcher, messages); });
    row("keywords", n, s, p, ms == mp);

    std::vector<kernels::ScoredPair> bs, bp;
    s = best_ms(repeats, [&] { bs = kernels::bleu_batch_serial(pairs); });
    p = best_ms(repeats, [&] { bp = kernels::bleu_batch(pairs); });
    bool agree = bs.size() == bp.size();
    for (std::size_t i = 0; agree && i < bs.size(); ++i)
        agree = bs[i].score.score == bp[i].score.score;
    row("bleu", pairs.size(), s, p, agree);
    return 0;
}
