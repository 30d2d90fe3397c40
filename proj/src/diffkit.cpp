#include <synrev/diffkit.hpp>
#include <synrev/error.hpp>
#include <synrev/kernels.hpp>
#include <synrev/util.hpp>

#include <charconv>

namespace synrev::diffkit {

namespace {

struct Line {
    std::string_view text;  // without the trailing '\n'
    std::size_t offset = 0;
};

std::vector<Line> split_lines(std::string_view text)
{
    std::vector<Line> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back({text.substr(pos), pos});
            break;
        }
        lines.push_back({text.substr(pos, nl - pos), pos});
        pos = nl + 1;
    }
    return lines;
}

bool starts_with(std::string_view s, std::string_view prefix)
{
    return s.substr(0, prefix.size()) == prefix;
}

std::string_view strip_cr(std::string_view s)
{
    if (!s.empty() && s.back() == '\r')
        s.remove_suffix(1);
    return s;
}

[[noreturn]] void malformed(std::size_t offset, const std::string& what)
{
    Error e(ErrorCode::MalformedDiff, what + " at byte " + std::to_string(offset));
    e.byte_offset = offset;
    throw e;
}

// Reverses git's C-style path quoting: "a/b\tc" with \\, \", \n, \t and octal escapes.
std::string unquote_path(std::string_view s)
{
    if (s.size() < 2 || s.front() != '"' || s.back() != '"')
        return std::string(s);
    s = s.substr(1, s.size() - 2);
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c != '\\' || i + 1 >= s.size()) {
            out.push_back(c);
            continue;
        }
        char e = s[++i];
        switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default:
            if (e >= '0' && e <= '7') {
                int v = e - '0';
                for (int k = 0; k < 2 && i + 1 < s.size() && s[i + 1] >= '0' && s[i + 1] <= '7'; ++k)
                    v = v * 8 + (s[++i] - '0');
                out.push_back(static_cast<char>(v));
            } else {
                out.push_back(e);
            }
        }
    }
    return out;
}

std::string clean_path(std::string_view raw, std::string_view side_prefix)
{
    raw = strip_cr(raw);
    if (raw.empty() || raw.front() != '"') {
        // plain diff puts a tab-separated timestamp after the name
        auto tab = raw.find('\t');
        if (tab != std::string_view::npos)
            raw = raw.substr(0, tab);
    }
    std::string path = unquote_path(raw);
    if (path == "/dev/null")
        return path;
    if (starts_with(path, side_prefix))
        path.erase(0, side_prefix.size());
    return path;
}

void parse_git_header_paths(std::string_view rest, FileDiff& file)
{
    rest = strip_cr(rest);
    if (!rest.empty() && rest.front() == '"') {
        auto close = rest.find("\" ", 1);
        if (close != std::string_view::npos) {
            file.old_path = clean_path(rest.substr(0, close + 1), "a/");
            file.new_path = clean_path(rest.substr(close + 2), "b/");
            return;
        }
    }
    // Prefer the split that makes both names equal (the common, non-rename case).
    if (rest.size() % 2 == 1) {
        auto mid = rest.size() / 2;
        if (rest[mid] == ' ' && starts_with(rest, "a/") && starts_with(rest.substr(mid + 1), "b/")
            && rest.substr(2, mid - 2) == rest.substr(mid + 3)) {
            file.old_path = std::string(rest.substr(2, mid - 2));
            file.new_path = file.old_path;
            return;
        }
    }
    auto split = rest.find(" b/");
    if (split == std::string_view::npos) {
        file.old_path = clean_path(rest, "a/");
        file.new_path = file.old_path;
        return;
    }
    file.old_path = clean_path(rest.substr(0, split), "a/");
    file.new_path = clean_path(rest.substr(split + 1), "b/");
}

bool parse_uint(std::string_view& s, std::uint64_t& out)
{
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr == s.data())
        return false;
    s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
    return true;
}

bool parse_range(std::string_view& s, std::uint64_t& start, std::uint64_t& len)
{
    if (!parse_uint(s, start))
        return false;
    len = 1;
    if (!s.empty() && s.front() == ',') {
        s.remove_prefix(1);
        if (!parse_uint(s, len))
            return false;
    }
    // Start 0 is only meaningful for an empty side (e.g. "-0,0" on a new file).
    return start > 0 || len == 0;
}

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text), lines_(split_lines(text)) {}

    std::vector<FileDiff> run()
    {
        while (i_ < lines_.size()) {
            auto l = strip_cr(lines_[i_].text);
            if (starts_with(l, "diff --git ")) {
                parse_git_section();
            } else if (is_file_header_pair()) {
                FileDiff file;
                parse_file_header(file);
                files_.push_back(std::move(file));
            } else if (starts_with(l, "@@")) {
                malformed(lines_[i_].offset, "hunk header without a preceding file header");
            } else if (l == "-- " || l == "--") {
                break;  // format-patch signature; nothing diff-related follows
            } else {
                ++i_;
            }
        }
        return std::move(files_);
    }

private:
    bool is_file_header_pair() const
    {
        return i_ + 1 < lines_.size() && starts_with(lines_[i_].text, "--- ")
            && starts_with(lines_[i_ + 1].text, "+++ ");
    }

    void parse_git_section()
    {
        FileDiff file;
        parse_git_header_paths(strip_cr(lines_[i_].text).substr(11), file);
        ++i_;
        while (i_ < lines_.size()) {
            auto l = strip_cr(lines_[i_].text);
            if (starts_with(l, "rename from ")) {
                file.old_path = std::string(l.substr(12));
            } else if (starts_with(l, "rename to ")) {
                file.new_path = std::string(l.substr(10));
            } else if (starts_with(l, "new file mode")) {
                file.old_path = "/dev/null";
            } else if (starts_with(l, "deleted file mode")) {
                file.new_path = "/dev/null";
            } else if (starts_with(l, "index ") || starts_with(l, "old mode") || starts_with(l, "new mode")
                       || starts_with(l, "similarity index") || starts_with(l, "dissimilarity index")
                       || starts_with(l, "copy from ") || starts_with(l, "copy to ")) {
                // metadata only
            } else if (starts_with(l, "Binary files ") || l == "GIT binary patch") {
                file.is_binary = true;
                ++i_;
                // skip the base85 payload of a binary patch
                while (i_ < lines_.size() && !starts_with(lines_[i_].text, "diff --git "))
                    ++i_;
                files_.push_back(std::move(file));
                return;
            } else if (is_file_header_pair()) {
                parse_file_header(file);
                files_.push_back(std::move(file));
                return;
            } else {
                break;
            }
            ++i_;
        }
        file.header_only = true;
        files_.push_back(std::move(file));
    }

    void parse_file_header(FileDiff& file)
    {
        const auto header_offset = lines_[i_].offset;
        file.old_path = clean_path(lines_[i_].text.substr(4), "a/");
        file.new_path = clean_path(lines_[i_ + 1].text.substr(4), "b/");
        i_ += 2;
        while (i_ < lines_.size() && starts_with(lines_[i_].text, "@@"))
            parse_hunk(file);
        if (file.hunks.empty())
            malformed(header_offset, "file header with no hunks");
        if (file.old_path.empty() || file.new_path.empty())
            malformed(header_offset, "empty path in file header");
        // Anything that still looks like hunk body means the header under-counted.
        if (i_ < lines_.size()) {
            auto l = strip_cr(lines_[i_].text);
            bool signature = l == "-- " || l == "--";
            if (!signature && !is_file_header_pair() && !l.empty()
                && (l.front() == '+' || l.front() == '-' || l.front() == ' '))
                malformed(lines_[i_].offset, "hunk body longer than its header declares");
        }
    }

    void parse_hunk(FileDiff& file)
    {
        Hunk hunk;
        const auto header_offset = lines_[i_].offset;
        if (!parse_hunk_header(strip_cr(lines_[i_].text), hunk))
            malformed(header_offset, "bad hunk header '" + std::string(lines_[i_].text.substr(0, 80)) + "'");
        ++i_;
        std::uint64_t old_rem = hunk.old_len;
        std::uint64_t new_rem = hunk.new_len;
        while (old_rem > 0 || new_rem > 0) {
            if (i_ >= lines_.size())
                malformed(text_.size(), "unexpected end of input inside hunk (line-count mismatch)");
            const auto& line = lines_[i_];
            std::string_view l = line.text;
            char tag = l.empty() ? ' ' : l.front();
            std::string_view body = l.empty() ? l : l.substr(1);
            if (tag == '\\') {
                if (hunk.lines.empty())
                    malformed(line.offset, "no-newline marker before any hunk line");
                hunk.lines.back().no_newline = true;
                ++i_;
                continue;
            }
            HunkLine hl;
            hl.text = std::string(body);
            if (tag == ' ') {
                if (old_rem == 0 || new_rem == 0)
                    malformed(line.offset, "context line exceeds hunk line counts");
                hl.tag = LineTag::Context;
                --old_rem;
                --new_rem;
            } else if (tag == '-') {
                if (old_rem == 0)
                    malformed(line.offset, "deleted line exceeds old line count");
                hl.tag = LineTag::Del;
                --old_rem;
            } else if (tag == '+') {
                if (new_rem == 0)
                    malformed(line.offset, "added line exceeds new line count");
                hl.tag = LineTag::Add;
                --new_rem;
            } else {
                malformed(line.offset, "hunk ended before its declared line counts (line-count mismatch)");
            }
            hunk.lines.push_back(std::move(hl));
            ++i_;
        }
        if (i_ < lines_.size() && starts_with(lines_[i_].text, "\\")) {
            if (hunk.lines.empty())
                malformed(lines_[i_].offset, "no-newline marker in an empty hunk");
            hunk.lines.back().no_newline = true;
            ++i_;
        }
        file.hunks.push_back(std::move(hunk));
    }

    std::string_view text_;
    std::vector<Line> lines_;
    std::size_t i_ = 0;
    std::vector<FileDiff> files_;
};

} // namespace

bool parse_hunk_header(std::string_view line, Hunk& out)
{
    if (!starts_with(line, "@@ -"))
        return false;
    std::string_view s = line.substr(4);
    if (!parse_range(s, out.old_start, out.old_len))
        return false;
    if (!starts_with(s, " +"))
        return false;
    s.remove_prefix(2);
    if (!parse_range(s, out.new_start, out.new_len))
        return false;
    if (!starts_with(s, " @@"))
        return false;
    s.remove_prefix(3);
    if (!s.empty() && s.front() == ' ')
        s.remove_prefix(1);
    out.section = std::string(s);
    return true;
}

std::vector<FileDiff> parse_unified_diff(std::string_view text)
{
    return Parser(text).run();
}

std::string serialize_unified_diff(std::span<const FileDiff> files)
{
    std::string out;
    for (const auto& f : files) {
        const std::string& old_name = f.old_path == "/dev/null" ? f.new_path : f.old_path;
        const std::string& new_name = f.new_path == "/dev/null" ? f.old_path : f.new_path;
        out += "diff --git a/" + old_name + " b/" + new_name + "\n";
        if (f.old_path == "/dev/null")
            out += "new file mode 100644\n";
        else if (f.new_path == "/dev/null")
            out += "deleted file mode 100644\n";
        auto side = [](const std::string& p, const char* prefix) {
            return p == "/dev/null" ? p : prefix + p;
        };
        if (f.is_binary) {
            out += "Binary files " + side(f.old_path, "a/") + " and " + side(f.new_path, "b/") + " differ\n";
            continue;
        }
        if (f.header_only) {
            if (f.old_path != f.new_path && f.old_path != "/dev/null" && f.new_path != "/dev/null")
                out += "rename from " + f.old_path + "\nrename to " + f.new_path + "\n";
            continue;
        }
        out += "--- " + side(f.old_path, "a/") + "\n";
        out += "+++ " + side(f.new_path, "b/") + "\n";
        for (const auto& h : f.hunks) {
            out += "@@ -" + std::to_string(h.old_start) + "," + std::to_string(h.old_len) + " +"
                 + std::to_string(h.new_start) + "," + std::to_string(h.new_len) + " @@";
            if (!h.section.empty())
                out += " " + h.section;
            out += "\n";
            for (const auto& l : h.lines) {
                out += l.tag == LineTag::Add ? '+' : l.tag == LineTag::Del ? '-' : ' ';
                out += l.text;
                out += "\n";
                if (l.no_newline)
                    out += "\\ No newline at end of file\n";
            }
        }
    }
    return out;
}

// --- candidacy -------------------------------------------------------------

std::string_view to_string(Reason r)
{
    switch (r) {
    case Reason::OK: return "OK";
    case Reason::MergeCommit: return "MergeCommit";
    case Reason::MultiFile: return "MultiFile";
    case Reason::NotJava: return "NotJava";
    case Reason::TestFile: return "TestFile";
    case Reason::NotSource: return "NotSource";
    }
    return "OK";
}

CandidacyVerdict judge_candidacy(const CommitRecord& commit, const CandidacyPolicy& policy)
{
    auto reject = [](Reason r) { return CandidacyVerdict{false, r}; };
    if (commit.parent_count >= 2)
        return reject(Reason::MergeCommit);
    if (commit.changed_files.size() != 1)
        return reject(Reason::MultiFile);
    const auto& file = commit.changed_files.front();
    const auto& path = file.path;
    if (path.size() < policy.extension.size()
        || path.compare(path.size() - policy.extension.size(), policy.extension.size(), policy.extension) != 0)
        return reject(Reason::NotJava);
    if (!policy.test_substring.empty()) {
        bool hit = policy.test_case_insensitive ? contains_ci(path, policy.test_substring)
                                                : path.find(policy.test_substring) != std::string::npos;
        if (hit)
            return reject(Reason::TestFile);
    }
    if (file.change_kind == ChangeKind::Deleted || file.change_kind == ChangeKind::Renamed)
        return reject(Reason::NotSource);
    return {true, Reason::OK};
}

std::uint64_t FunnelReport::total() const
{
    std::uint64_t sum = 0;
    for (auto c : counts)
        sum += c;
    return sum;
}

FunnelReport& FunnelReport::operator+=(const FunnelReport& other)
{
    for (std::size_t i = 0; i < counts.size(); ++i)
        counts[i] += other.counts[i];
    return *this;
}

json FunnelReport::to_json() const
{
    json j = json::object();
    for (auto r : kAllReasons)
        j[std::string(to_string(r))] = (*this)[r];
    return j;
}

FunnelReport FunnelReport::from_json(const json& j)
{
    FunnelReport rep;
    for (auto r : kAllReasons) {
        auto key = std::string(to_string(r));
        if (!j.contains(key))
            throw Error(ErrorCode::SchemaError, "FunnelReport missing '" + key + "'");
        rep[r] = j.at(key).get<std::uint64_t>();
    }
    return rep;
}

FilterResult filter_candidates(std::span<const CommitRecord> commits, const CandidacyPolicy& policy)
{
    FilterResult result;
    auto verdicts = kernels::judge_batch(commits, policy);
    for (std::size_t i = 0; i < commits.size(); ++i) {
        ++result.report[verdicts[i].reason];
        if (verdicts[i].accepted)
            result.accepted.push_back(commits[i]);
    }
    return result;
}

} // namespace synrev::diffkit

namespace synrev::diffkit {

json to_json(const FileDiff& f)
{
    json hunks = json::array();
    for (const auto& h : f.hunks) {
        json lines = json::array();
        for (const auto& l : h.lines) {
            const char* tag = l.tag == LineTag::Add ? "+" : l.tag == LineTag::Del ? "-" : " ";
            lines.push_back({{"tag", tag}, {"text", l.text}});
        }
        hunks.push_back({{"old_start", h.old_start},
                         {"old_len", h.old_len},
                         {"new_start", h.new_start},
                         {"new_len", h.new_len},
                         {"section", h.section},
                         {"lines", lines}});
    }
    return json{{"old_path", f.old_path},
                {"new_path", f.new_path},
                {"is_binary", f.is_binary},
                {"header_only", f.header_only},
                {"hunks", hunks}};
}

} // namespace synrev::diffkit
