#include "support.hpp"

#include <doctest.h>
#include <synrev/metrics.hpp>

#include <cmath>

using namespace synrev;
using namespace synrev::metrics;
using testsupport::error_of;

namespace {

std::vector<std::string> words(const std::string& s)
{
    std::vector<std::string> out;
    for (auto& w : split(s, ' '))
        if (!w.empty())
            out.push_back(w);
    return out;
}

double bleu(const std::string& cand, const std::string& ref)
{
    auto c = words(cand), r = words(ref);
    return bleu4(c, r).score;
}

} // namespace

TEST_SUITE("metrics")
{
    // Oracle values frozen from an independent Python implementation of the same
    // smoothing rule (add-one on orders 2..4 only).
    TEST_CASE("bleu identity")
    {
        CHECK(bleu("the cat sat on the mat", "the cat sat on the mat") == 1.0);
        CHECK(bleu("a b c d e", "a b c d e") == 1.0);
    }

    TEST_CASE("bleu short candidate")
    {
        auto c = words("the cat sat"), r = words("the cat sat down");
        auto s = bleu4(c, r);
        CHECK(std::abs(s.score - 0.7165313105737893) < 1e-9);
        CHECK(std::abs(s.brevity_penalty - std::exp(1.0 - 4.0 / 3.0)) < 1e-12);
        for (double p : s.n_gram_precisions)
            CHECK(p == 1.0);
    }

    TEST_CASE("bleu smoothing floor and disjoint vocabularies")
    {
        CHECK(std::abs(bleu("a b c d e f g h i j", "j i h g f e d c b a") - 0.19304869754804482) < 1e-9);
        CHECK(std::abs(bleu("a b c d e f g h i j", "j i h g f e d c b a")
                       - std::pow(1.0 * (1.0 / 10) * (1.0 / 9) * (1.0 / 8), 0.25))
              < 1e-12);
        CHECK(bleu("alpha beta gamma delta", "one two three four") == 0.0);
    }

    TEST_CASE("bleu general pairs")
    {
        CHECK(std::abs(bleu("the quick brown fox jumps over the lazy dog", "the quick brown dog jumps over a lazy fox")
                       - 0.28719089450090896)
              < 1e-9);
        auto c = words("use strncpy instead of strcpy here");
        auto r = words("please use strncpy instead of strcpy to avoid overflow");
        auto s = bleu4(c, r);
        CHECK(std::abs(s.score - 0.4608636396914616) < 1e-9);
        CHECK(std::abs(s.brevity_penalty - 0.6065306597126334) < 1e-12);
        CHECK(std::abs(s.n_gram_precisions[0] - 5.0 / 6) < 1e-12);
        CHECK(std::abs(s.n_gram_precisions[3] - 2.0 / 3) < 1e-12);
    }

    TEST_CASE("bleu clips repeated n-grams")
    {
        auto st = bleu_stats(words("the the the the"), words("the cat"));
        CHECK(st.matches[0] == 1);
        CHECK(st.totals[0] == 4);
    }

    TEST_CASE("bleu empty inputs")
    {
        std::vector<std::string> none, one{"x"};
        CHECK(error_of([&] { bleu4(none, one); }) == ErrorCode::EmptyCandidate);
        CHECK(error_of([&] { bleu4(one, none); }) == ErrorCode::EmptyReference);
    }

    TEST_CASE("corpus stats add up")
    {
        auto a = bleu_stats(words("a b c"), words("a b c d"));
        auto b = bleu_stats(words("x y"), words("x y"));
        BleuStats sum = a;
        sum += b;
        CHECK(sum.candidate_length == 5);
        CHECK(sum.reference_length == 6);
        CHECK(sum.matches[0] == 5);
        CHECK(sum.totals[1] == 3);
    }

    TEST_CASE("review tokenizer")
    {
        auto t = tokenize_review("Use `strncpy(dst, n)` here, NOT strcpy! buffer_len");
        CHECK(t == std::vector<std::string>{"use", "`strncpy(dst, n)`", "here", ",", "not", "strcpy", "!", "buffer_len"});
        CHECK(tokenize_review("   ").empty());
    }

    TEST_CASE("kappa analytic cases")
    {
        std::vector<int> a{1, 1, 0, 0}, b{1, 0, 1, 0};
        auto r = cohen_kappa<int>(a, b);
        CHECK(std::abs(r.kappa - 0.0) < 1e-12);
        CHECK(r.observed_agreement == 0.5);
        CHECK(r.expected_agreement == 0.5);

        std::vector<int> p{1, 0}, q{0, 1};
        CHECK(std::abs(cohen_kappa<int>(p, q).kappa - (-1.0)) < 1e-12);

        std::vector<int> s{1, 0, 1, 1, 0};
        CHECK(std::abs(cohen_kappa<int>(s, s).kappa - 1.0) < 1e-12);
    }

    TEST_CASE("kappa textbook example")
    {
        // 50 items: yes/yes 20, yes/no 5, no/yes 10, no/no 15 -> po .7, pe .5, kappa .4
        std::vector<bool> a, b;
        auto add = [&](bool x, bool y, int n) {
            for (int i = 0; i < n; ++i) {
                a.push_back(x);
                b.push_back(y);
            }
        };
        add(true, true, 20);
        add(true, false, 5);
        add(false, true, 10);
        add(false, false, 15);
        auto r = cohen_kappa(a, b);
        CHECK(std::abs(r.kappa - 0.4) < 1e-12);
        CHECK(r.n_items == 50);
    }

    TEST_CASE("kappa over more than two categories")
    {
        std::vector<std::string> a{"x", "y", "z", "x"}, b{"x", "y", "y", "z"};
        auto r = cohen_kappa<std::string>(a, b);
        // po = .5; pe = (2*1 + 1*2 + 1*1)/16 = 5/16
        CHECK(std::abs(r.kappa - (0.5 - 5.0 / 16) / (1 - 5.0 / 16)) < 1e-12);
    }

    TEST_CASE("kappa errors")
    {
        std::vector<int> a{1, 0}, b{1};
        CHECK(error_of([&] { cohen_kappa<int>(a, b); }) == ErrorCode::LengthMismatch);
        std::vector<int> e;
        CHECK(error_of([&] { cohen_kappa<int>(e, e); }) == ErrorCode::LengthMismatch);
        // single category on both sides with full agreement is defined as 1
        std::vector<int> ones{1, 1, 1};
        CHECK(cohen_kappa<int>(ones, ones).kappa == 1.0);
    }

    TEST_CASE("eval report")
    {
        std::vector<EvalPair> pairs{{"use strncpy here", "use strncpy here"},
                                    {"", "check the length"},
                                    {"sanitize input", "escape the input"}};
        std::vector<PairLabels> labels{{{true, true}, {true, true}, std::nullopt},
                                       {{false, false}, {false, true}, ManualLabel{false, true}},
                                       {{true, false}, {true, false}, std::nullopt}};
        auto r = eval_report(pairs, labels);
        CHECK(r.n_pairs == 3);
        REQUIRE(r.sentence_bleu.size() == 3);
        CHECK(r.sentence_bleu[0] == 1.0);
        CHECK(r.sentence_bleu[1] == 0.0);
        CHECK(std::abs(r.semantic_equivalence_rate - 2.0 / 3) < 1e-12);
        CHECK(std::abs(r.applicability_rate - 2.0 / 3) < 1e-12);
        CHECK(r.kappa_semantic_equivalence.kappa == 1.0);
        CHECK(r.to_json()["n_pairs"] == 3);
        CHECK(r.to_table().find("corpus") != std::string::npos);

        labels[1].adjudicated.reset();
        CHECK(error_of([&] { eval_report(pairs, labels); }) == ErrorCode::MissingLabels);
        labels.pop_back();
        CHECK(error_of([&] { eval_report(pairs, labels); }) == ErrorCode::MissingLabels);
    }
}
