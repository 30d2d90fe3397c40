#include <synrev/ratelimit.hpp>

#include <algorithm>
#include <thread>

namespace synrev {

TokenBucket::TokenBucket(double tokens_per_second, double capacity)
    : rate_(tokens_per_second), capacity_(std::max(1.0, capacity)), tokens_(capacity_), last_(clock::now()),
      blocked_until_(last_)
{
}

void TokenBucket::refill(clock::time_point now)
{
    std::chrono::duration<double> dt = now - last_;
    tokens_ = std::min(capacity_, tokens_ + dt.count() * rate_);
    last_ = now;
}

void TokenBucket::acquire()
{
    if (rate_ <= 0.0)
        return;
    std::unique_lock lock(mu_);
    while (true) {
        auto now = clock::now();
        if (now < blocked_until_) {
            auto wait = blocked_until_ - now;
            lock.unlock();
            std::this_thread::sleep_for(wait);
            lock.lock();
            continue;
        }
        refill(now);
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

void TokenBucket::penalize(std::chrono::milliseconds delay)
{
    std::lock_guard lock(mu_);
    blocked_until_ = std::max(blocked_until_, clock::now() + delay);
}

void Semaphore::acquire()
{
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_use_ < permits_; });
    ++in_use_;
    high_water_ = std::max(high_water_, in_use_);
}

void Semaphore::release()
{
    {
        std::lock_guard lock(mu_);
        --in_use_;
    }
    cv_.notify_one();
}

std::size_t Semaphore::high_water() const
{
    std::lock_guard lock(mu_);
    return high_water_;
}

} // namespace synrev
