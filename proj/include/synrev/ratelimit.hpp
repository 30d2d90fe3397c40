#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <mutex>

namespace synrev {

/// Token bucket shared by every worker talking to one host or provider.
/// A rate of zero disables limiting.
class TokenBucket {
public:
    TokenBucket(double tokens_per_second, double capacity);

    /// Blocks until a token is available.
    void acquire();
    /// Pushes the next available token out by the given delay (server retry-after).
    void penalize(std::chrono::milliseconds delay);

private:
    using clock = std::chrono::steady_clock;
    void refill(clock::time_point now);

    std::mutex mu_;
    double rate_;
    double capacity_;
    double tokens_;
    clock::time_point last_;
    clock::time_point blocked_until_;
};

/// Counting semaphore with a runtime bound, plus a high-water mark for tests.
class Semaphore {
public:
    explicit Semaphore(std::size_t permits) : permits_(permits) {}

    void acquire();
    void release();
    std::size_t high_water() const;

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t permits_;
    std::size_t in_use_ = 0;
    std::size_t high_water_ = 0;
};

class SemaphoreGuard {
public:
    explicit SemaphoreGuard(Semaphore& s) : s_(s) { s_.acquire(); }
    ~SemaphoreGuard() { s_.release(); }
    SemaphoreGuard(const SemaphoreGuard&) = delete;
    SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

private:
    Semaphore& s_;
};

} // namespace synrev
