#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace smt {

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    if (k > n - k) k = n - k;
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r / i * (n - k + i) + r % i * (n - k + i) / i;
    }
    return r;
}

// Colexicographic rank of a strictly increasing 0-based index tuple:
//   rank(i1 < i2 < ... < ip) = sum_t C(i_t, t)
// Tuples enumerated with the last index outermost are consecutive in rank.
inline std::uint64_t tuple_rank(const std::vector<int>& idx) {
    std::uint64_t r = 0;
    for (std::size_t t = 0; t < idx.size(); ++t) r += binomial(idx[t], t + 1);
    return r;
}

inline std::vector<int> tuple_unrank(std::uint64_t rank, int p, int n) {
    std::vector<int> idx(p);
    for (int t = p; t >= 1; --t) {
        int lo = t - 1, hi = n - 1, best = t - 1;
        while (lo <= hi) {
            int mid = (lo + hi) / 2;
            if (binomial(mid, t) <= rank) { best = mid; lo = mid + 1; }
            else hi = mid - 1;
        }
        idx[t - 1] = best;
        rank -= binomial(best, t);
    }
    return idx;
}

// Symmetric order-p tensor on n indices, stored as the flat array over
// strictly increasing tuples in colex order. C(n, p) doubles.
struct SymmetricTensor {
    int n = 0;
    int p = 0;
    std::vector<double> data;

    SymmetricTensor() = default;
    SymmetricTensor(int n_, int p_) : n(n_), p(p_) {
        if (n < p) throw std::invalid_argument("SymmetricTensor: n < p");
        data.assign(binomial(n, p), 0.0);
    }

    std::uint64_t size() const { return data.size(); }

    // idx must be strictly increasing
    double& at(const std::vector<int>& idx) { return data[tuple_rank(idx)]; }
    double at(const std::vector<int>& idx) const { return data[tuple_rank(idx)]; }
};

// Visit all strictly increasing p-tuples in colex order. fn(idx, rank) with
// idx a const int* of length p.
template <typename F>
void for_each_tuple(int n, int p, F&& fn) {
    std::vector<int> idx(p);
    for (int t = 0; t < p; ++t) idx[t] = t;
    std::uint64_t rank = 0;
    const std::uint64_t total = binomial(n, p);
    while (rank < total) {
        fn(idx.data(), rank);
        ++rank;
        // next tuple in colex order
        int t = 0;
        while (t + 1 < p && idx[t] + 1 == idx[t + 1]) {
            idx[t] = t;
            ++t;
        }
        ++idx[t];
        if (t == p - 1 && idx[t] >= n) break;
    }
}

} // namespace smt
