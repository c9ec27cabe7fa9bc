#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace ratioflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Invalid configuration, dimensions, or file contents.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A computation produced non-finite values or left its valid region.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or corrupted checkpoint file.
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A benchmark assertion threshold was violated.
class AssertionFailure : public std::runtime_error {
public:
    explicit AssertionFailure(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Deterministic random source. One instance per logical stream; all draws
/// go through the same engine so a (seed, call-sequence) pair fixes every value.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return unif_(gen_); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unif_(gen_); }

    double normal() { return norm_(gen_); }

    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uniform_int_distribution<std::int64_t> d(lo, hi);
        return d(gen_);
    }

    /// +1 or -1 with equal probability.
    double rademacher() { return unif_(gen_) < 0.5 ? -1.0 : 1.0; }

    Vec normal_vec(Index n) {
        Vec v(n);
        for (Index i = 0; i < n; ++i) v[i] = norm_(gen_);
        return v;
    }

    Mat normal_mat(Index rows, Index cols) {
        Mat m(rows, cols);
        for (Index c = 0; c < cols; ++c)
            for (Index r = 0; r < rows; ++r) m(r, c) = norm_(gen_);
        return m;
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> norm_{0.0, 1.0};
};

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320) over a byte range.
inline std::uint32_t crc32(const void* data, std::size_t size, std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = ~seed;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

/// FNV-1a 64-bit hash; used for provenance fingerprints in reports.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    std::uint64_t h = 1469598103934665603ull;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

/// Runs fn(begin, end) over [0, n) in fixed-size chunks. The chunk grid depends
/// only on chunk_size, never on the worker count, so per-item arithmetic is
/// identical for any thread setting.
template <typename Fn>
void parallel_chunks(Index n, Index chunk_size, int threads, Fn&& fn) {
    if (n <= 0) return;
    if (chunk_size <= 0) chunk_size = n;
    std::vector<std::pair<Index, Index>> chunks;
    for (Index b = 0; b < n; b += chunk_size) chunks.emplace_back(b, std::min(n, b + chunk_size));

    if (threads <= 1 || chunks.size() == 1) {
        for (const auto& [b, e] : chunks) fn(b, e);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n_workers = std::min<int>(threads, static_cast<int>(chunks.size()));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= chunks.size()) break;
                    fn(chunks[i].first, chunks[i].second);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace ratioflow
