#pragma once
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace mcei {

// Counter-based splitmix64 stream. Draw k is a pure function of
// (seed, stream_id, k), so streams can be replayed or split without
// sharing state. derive() gives an independent substream; normals use
// Box-Muller and always consume exactly two uniforms, so draw indices
// stay aligned across platforms.
class RngStream {
  public:
    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
        : seed_(seed), stream_id_(stream_id),
          base_(finalize(finalize(seed + kGolden) ^ (stream_id * kMulA + kMulB))) {}

    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64() { return finalize(base_ + (++counter_) * kGolden); }

    // Uniform on the open interval (0, 1); never returns 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Eigen::MatrixXd normal_mat(int rows, int cols) {
        Eigen::MatrixXd out(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i)
                out(i, j) = normal();
        return out;
    }

    Eigen::VectorXd normal_vec(int n) { return normal_mat(n, 1); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
            std::swap(p[i], p[j]);
        }
        return p;
    }

    RngStream derive(std::uint64_t tag) const {
        return RngStream(seed_, finalize(stream_id_ * kMulA + kMulB) ^ finalize(tag + kGolden));
    }

    RngStream derive(std::string_view tag) const { return derive(fnv1a(tag)); }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001B3ull;
        }
        return h;
    }

    static std::uint64_t finalize(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

  private:
    static constexpr std::uint64_t kMulA = 0xD6E8FEB86659FD93ull;
    static constexpr std::uint64_t kMulB = 0xA5CB3D4A55DEAD0Full;

    std::uint64_t seed_ = 0;
    std::uint64_t stream_id_ = 0;
    std::uint64_t base_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace mcei
