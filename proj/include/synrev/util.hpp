#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace synrev {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

/// Streaming SHA-256 for hashing several fields without concatenating them.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::string_view data);
    /// Appends a length-prefixed field, so ("ab","c") and ("a","bc") differ.
    Sha256& field(std::string_view data);
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Time source. Injectable so grid runs can be made byte-reproducible.
class Clock {
public:
    virtual ~Clock() = default;
    /// UTC timestamp, ISO-8601 with a trailing Z.
    virtual std::string now_utc() const = 0;
    /// Monotonic milliseconds, used for latency measurement.
    virtual std::int64_t steady_ms() const = 0;
};

class SystemClock final : public Clock {
public:
    std::string now_utc() const override;
    std::int64_t steady_ms() const override;
};

/// Always reports the same instant; latency measured against it is zero.
class FixedClock final : public Clock {
public:
    explicit FixedClock(std::string timestamp) : timestamp_(std::move(timestamp)) {}
    std::string now_utc() const override { return timestamp_; }
    std::int64_t steady_ms() const override { return 0; }

private:
    std::string timestamp_;
};

std::string format_utc(std::chrono::system_clock::time_point tp);

/// Seeded generator whose output is identical across standard libraries.
class StableRng {
public:
    explicit StableRng(std::uint64_t seed) : engine_(seed) {}
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// In-place Fisher-Yates shuffle driven by StableRng.
template <typename T>
void stable_shuffle(std::vector<T>& items, std::uint64_t seed)
{
    StableRng rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
/// Deletes temporaries a killed writer left in `dir`. Only safe while nothing
/// else writes there. Returns how many were removed.
std::size_t remove_stale_temporaries(const std::filesystem::path& dir);

std::string to_lower_ascii(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);

std::vector<std::string> split(std::string_view s, char sep);

std::string trim(std::string_view s);

/// Sleep hook; tests replace it to avoid real waiting.
using SleepFn = std::function<void(std::chrono::milliseconds)>;
void real_sleep(std::chrono::milliseconds d);

} // namespace synrev
