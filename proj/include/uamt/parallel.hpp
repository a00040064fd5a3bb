#pragma once

#include <cstdint>
#include <vector>

#include <omp.h>

namespace uamt {

inline void set_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

inline int max_threads() { return omp_get_max_threads(); }

// Deterministic parallel reduction: the range is cut into fixed-size blocks,
// block partials are computed in parallel and then summed in block order.
// The result does not depend on the number of threads.
template <class F>
double block_sum(int64_t n, F&& partial_of_block) {
    constexpr int64_t kBlock = 1 << 14;
    const int64_t nblocks = (n + kBlock - 1) / kBlock;
    if (nblocks <= 1) return n > 0 ? partial_of_block(int64_t(0), n) : 0.0;
    std::vector<double> partials(size_t(nblocks), 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < nblocks; ++b) {
        const int64_t lo = b * kBlock;
        const int64_t hi = lo + kBlock < n ? lo + kBlock : n;
        partials[size_t(b)] = partial_of_block(lo, hi);
    }
    double total = 0.0;
    for (double p : partials) total += p;
    return total;
}

}  // namespace uamt
