#pragma once

// Deterministic mixed-radix complex FFT.
//
// Sizes factor into arbitrary primes (O(n p) combine per prime factor p, so
// smooth sizes are fast and prime sizes degrade gracefully).  Twiddle tables
// are computed once per size and cached; there is no runtime plan search, so
// repeated transforms of the same data are bitwise identical within a build.

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace hspe::fft {

using cd = std::complex<double>;

inline int smallest_factor(int n) {
    for (int p = 2; p * p <= n; ++p)
        if (n % p == 0) return p;
    return n;
}

/// w[j] = exp(-2*pi*i*j/n), the forward twiddle table for size n.
inline std::vector<cd> make_twiddle_table(int n) {
    std::vector<cd> w(static_cast<size_t>(n));
    const double step = -2.0 * std::numbers::pi / static_cast<double>(n);
    for (int j = 0; j < n; ++j) w[static_cast<size_t>(j)] = std::polar(1.0, step * j);
    return w;
}

/// Cached table for size n; tables are never evicted, references stay valid.
inline const std::vector<cd>& twiddle_table(int n) {
    static std::mutex mu;
    static std::map<int, std::vector<cd>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, make_twiddle_table(n)).first;
    return it->second;
}

namespace detail {

// Recursive decimation-in-time on a strided view.  `tw` is the table for the
// top-level size; a sub-transform of size n indexes it with stride tw_stride
// = n_top / n.  `scratch` must hold at least n entries; sub-calls reuse it
// before the combine stage of this level touches it.
inline void transform_rec(cd* x, int n, int stride, const std::vector<cd>& tw,
                          int tw_stride, bool conjugate, cd* scratch) {
    if (n == 1) return;
    const int p = smallest_factor(n);
    const int m = n / p;
    for (int r = 0; r < p; ++r)
        transform_rec(x + static_cast<ptrdiff_t>(r) * stride, m, stride * p, tw,
                      tw_stride * p, conjugate, scratch);
    for (int q = 0; q < m; ++q) {
        for (int t = 0; t < p; ++t) {
            const int k = q + m * t;
            cd acc(0.0, 0.0);
            for (int r = 0; r < p; ++r) {
                const long long j = static_cast<long long>(k) * r % n;
                cd w = tw[static_cast<size_t>(j * tw_stride)];
                if (conjugate) w = std::conj(w);
                acc += w * x[static_cast<ptrdiff_t>(q * p + r) * stride];
            }
            scratch[k] = acc;
        }
    }
    for (int k = 0; k < n; ++k) x[static_cast<ptrdiff_t>(k) * stride] = scratch[k];
}

}  // namespace detail

/// Unnormalized 1D transform of a strided view.
/// forward: X[k] = sum_j x[j] e^{-2 pi i jk/n};  inverse: e^{+2 pi i jk/n}.
inline void transform(cd* x, int n, int stride, bool inverse, cd* scratch) {
    if (n <= 0) throw std::invalid_argument("fft: size must be positive");
    detail::transform_rec(x, n, stride, twiddle_table(n), 1, inverse, scratch);
}

/// Unnormalized 2D transform of row-major data indexed [ix*nz + iz].
inline void transform_2d(std::vector<cd>& a, int nx, int nz, bool inverse) {
    if (static_cast<size_t>(nx) * static_cast<size_t>(nz) != a.size())
        throw std::invalid_argument("fft: shape mismatch");
    std::vector<cd> scratch(static_cast<size_t>(std::max(nx, nz)));
    for (int ix = 0; ix < nx; ++ix)
        transform(a.data() + static_cast<ptrdiff_t>(ix) * nz, nz, 1, inverse, scratch.data());
    for (int iz = 0; iz < nz; ++iz)
        transform(a.data() + iz, nx, nz, inverse, scratch.data());
}

}  // namespace hspe::fft
