#include "support.hpp"

#include <doctest.h>
#include <synrev/datasets.hpp>
#include <synrev/keywords.hpp>

#include <fstream>

using namespace synrev;
using namespace synrev::datasets;
using testsupport::error_of;
using testsupport::TempDir;

namespace {

DatasetSample sample(int i)
{
    DatasetSample s;
    s.repo = "acme/r" + std::to_string(i % 7);
    s.sha = testsupport::fake_sha("s" + std::to_string(i));
    s.diff = testsupport::java_diff("src/A" + std::to_string(i) + ".java", i);
    s.message = "Fix \"quoted\" issue\twith tab #" + std::to_string(i);
    s.synthetic_review = "Review é ✓ line1\nline2 " + std::to_string(i);
    s.provider_id = "mock-a";
    s.strategy = "zero_shot";
    s.template_version = "1+abc";
    s.created_at = "2024-01-01T00:00:00Z";
    s.assign_id();
    return s;
}

std::filesystem::path fixture(const std::string& name)
{
    return std::filesystem::path(SYNREV_SOURCE_DIR) / "tests" / "fixtures" / name;
}

} // namespace

TEST_SUITE("datasets")
{
    TEST_CASE("ids are derived from provenance")
    {
        auto a = sample(1);
        CHECK(a.id.size() == 64);
        CHECK(a.id == DatasetSample::compute_id(a.repo, a.sha, a.provider_id, a.strategy, a.template_version));
        auto b = a;
        b.strategy = "self_reflection";
        b.assign_id();
        CHECK(b.id != a.id);
        // fields are length-prefixed, not concatenated
        CHECK(DatasetSample::compute_id("ab", "c", "p", "s", "t") != DatasetSample::compute_id("a", "bc", "p", "s", "t"));
        CHECK_NOTHROW(a.validate());
        a.id[0] = a.id[0] == '0' ? '1' : '0';
        CHECK(error_of([&] { a.validate(); }) == ErrorCode::SchemaError);
        auto e = sample(2);
        e.synthetic_review.clear();
        CHECK(error_of([&] { e.validate(); }) == ErrorCode::SchemaError);
    }

    TEST_CASE("jsonl keys are exact")
    {
        auto j = sample(3).to_json();
        std::vector<std::string> keys;
        for (auto it = j.begin(); it != j.end(); ++it)
            keys.push_back(it.key());
        std::sort(keys.begin(), keys.end());
        CHECK(keys == std::vector<std::string>{"created_at", "diff", "id", "message", "provider_id", "repo", "sha",
                                               "strategy", "synthetic_review", "template_version"});
        j["extra"] = 1;
        CHECK(error_of([&] { DatasetSample::from_json(j); }) == ErrorCode::SchemaError);
    }

    TEST_CASE("round trip of 1000 samples")
    {
        TempDir dir("ds");
        std::vector<DatasetSample> in;
        for (int i = 0; i < 1000; ++i)
            in.push_back(sample(i));
        CHECK(write_jsonl(in, dir / "d.jsonl") == 1000);
        auto out = read_jsonl(dir / "d.jsonl");
        CHECK(out == in);
        // every line newline-terminated
        auto text = read_file(dir / "d.jsonl");
        CHECK(std::count(text.begin(), text.end(), '\n') == 1000);
        CHECK(text.back() == '\n');
    }

    TEST_CASE("duplicates and schema errors carry line numbers")
    {
        TempDir dir("ds");
        std::vector<DatasetSample> dup{sample(1), sample(1)};
        CHECK(error_of([&] { write_jsonl(dup, dir / "x.jsonl"); }) == ErrorCode::DuplicateId);
        CHECK_FALSE(std::filesystem::exists(dir / "x.jsonl"));

        std::vector<DatasetSample> two{sample(1), sample(2)};
        write_jsonl(two, dir / "y.jsonl");
        auto text = read_file(dir / "y.jsonl");
        testsupport::write_text(dir / "bad.jsonl", text + "\n{\"id\": 3\n");
        try {
            read_jsonl(dir / "bad.jsonl");
            FAIL("expected SchemaError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::SchemaError);
            CHECK(e.line == 4);
        }
        testsupport::write_text(dir / "dup.jsonl", text + text);
        CHECK(error_of([&] { read_jsonl(dir / "dup.jsonl"); }) == ErrorCode::DuplicateId);
    }

    TEST_CASE("invalid utf-8 does not break the writer")
    {
        TempDir dir("ds");
        auto s = sample(5);
        s.diff += "\xff\xfe";
        std::vector<DatasetSample> v{s};
        write_jsonl(v, dir / "u.jsonl");
        auto back = read_jsonl(dir / "u.jsonl");
        REQUIRE(back.size() == 1);
        CHECK(back[0].id == s.id);
    }

    TEST_CASE("external partition: comments only")
    {
        std::vector<ExternalReviewSample> rows{{"- // xss here", "Rename this variable", "test"},
                                               {"+ int x;", "This is an XSS vector", "test"},
                                               {"+ int y;", "cross site scripting risk", "test"}};
        std::vector<std::string> kws{"xss", "cross-site"};
        auto flagged = filter_external_partition(rows, kws);
        REQUIRE(flagged.size() == 2);
        CHECK(flagged[0].sample.review_comment == "This is an XSS vector");
        CHECK(flagged[0].matched_keywords == std::vector<std::string>{"xss"});
        CHECK(flagged[1].matched_keywords == std::vector<std::string>{"cross-site"});
    }

    TEST_CASE("shipped external fixture flags exactly 43")
    {
        auto rows = read_external_partition(fixture("external_partition.jsonl"), ColumnMapping{}, "test");
        CHECK(rows.size() == 129);
        auto seed = keywords::load_keyword_list(std::filesystem::path(SYNREV_SOURCE_DIR) / "data/keywords/seed.txt");
        auto flagged = filter_external_partition(rows, seed);
        CHECK(flagged.size() == 43);
        keywords::Matcher m(seed);
        std::size_t diff_only = 0;
        for (const auto& r : rows)
            if (m.any(r.diff_hunk) && !m.any(r.review_comment))
                ++diff_only;
        CHECK(diff_only > 0);
        for (const auto& f : flagged)
            CHECK(m.any(f.sample.review_comment));

        TempDir dir("ext");
        write_flagged_jsonl(flagged, dir / "f.jsonl");
        CHECK(read_flagged_jsonl(dir / "f.jsonl") == flagged);
    }

    TEST_CASE("external partition column mapping")
    {
        TempDir dir("ext");
        testsupport::write_text(dir / "p.jsonl", "{\"patch\":\"+a\",\"msg\":\"leak here\",\"other\":1}\n\n"
                                                 "{\"patch\":\"+b\",\"msg\":\"fine\"}\n");
        auto m = ColumnMapping::from_json({{"diff_hunk", "patch"}, {"review_comment", "msg"}});
        auto rows = read_external_partition(dir / "p.jsonl", m, "valid");
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].review_comment == "leak here");
        CHECK(rows[1].source_partition == "valid");
        CHECK(error_of([&] { read_external_partition(dir / "p.jsonl", ColumnMapping{}, "x"); })
              == ErrorCode::SchemaError);
        CHECK(error_of([] { ColumnMapping::from_json({{"diff", "x"}}); }) == ErrorCode::ConfigError);
    }
}
