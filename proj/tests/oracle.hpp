#pragma once

// Test-only oracle: exact Smith normal form over the integers, computed with
// big-integer arithmetic and the classical gcd-reduction algorithm.  Nothing
// here is shared with the library implementation; the library's p-adic
// elimination is checked against this independently.

#include <algorithm>
#include <cstdlib>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace oracle {

using bigint = boost::multiprecision::cpp_int;
using BigMatrix = std::vector<std::vector<bigint>>;

inline bigint big_abs(const bigint& x) { return x < 0 ? bigint(-x) : x; }

// Diagonal of the integer Smith normal form of a (noncanonical entries are
// normalized to be nonnegative; divisibility d1 | d2 | ... holds).
inline std::vector<bigint> integer_snf(BigMatrix a) {
    const int rows = static_cast<int>(a.size());
    const int cols = rows ? static_cast<int>(a[0].size()) : 0;
    const int limit = std::min(rows, cols);
    std::vector<bigint> diag;

    for (int k = 0; k < limit; ++k) {
        // move a nonzero entry of minimal absolute value to (k, k)
        for (;;) {
            int pi = -1, pj = -1;
            bigint best;
            for (int i = k; i < rows; ++i)
                for (int j = k; j < cols; ++j)
                    if (a[i][j] != 0 && (pi < 0 || big_abs(a[i][j]) < best)) {
                        best = big_abs(a[i][j]);
                        pi = i;
                        pj = j;
                    }
            if (pi < 0) goto done;  // submatrix is zero
            std::swap(a[pi], a[k]);
            for (int i = 0; i < rows; ++i) std::swap(a[i][pj], a[i][k]);

            bool clean = true;
            for (int i = k + 1; i < rows; ++i) {
                bigint q = a[i][k] / a[k][k];
                if (q != 0)
                    for (int j = k; j < cols; ++j) a[i][j] -= q * a[k][j];
                if (a[i][k] != 0) clean = false;
            }
            for (int j = k + 1; j < cols; ++j) {
                bigint q = a[k][j] / a[k][k];
                if (q != 0)
                    for (int i = k; i < rows; ++i) a[i][j] -= q * a[i][k];
                if (a[k][j] != 0) clean = false;
            }
            if (!clean) continue;  // remainders became new smaller entries

            // pivot must divide the rest of the submatrix for true SNF
            bool divides = true;
            for (int i = k + 1; i < rows && divides; ++i)
                for (int j = k + 1; j < cols && divides; ++j)
                    if (a[i][j] % a[k][k] != 0) {
                        for (int t = k; t < cols; ++t) a[k][t] += a[i][t];
                        divides = false;
                    }
            if (divides) break;
        }
        diag.push_back(big_abs(a[k][k]));
    }
done:
    return diag;
}

inline int val_p(bigint x, long long p) {
    if (x == 0) return -1;  // infinite
    int v = 0;
    while (x % p == 0) {
        x /= p;
        ++v;
    }
    return v;
}

struct ZpModuleShape {
    std::vector<int> torsion_exponents;  // sorted ascending, positive
    int free_rank;
    long long e() const {
        long long s = 0;
        for (int t : torsion_exponents) s += t;
        return s;
    }
    bool operator==(const ZpModuleShape&) const = default;
};

// p-part of coker(A : Z^cols -> Z^rows) as a Zp-module: torsion exponents are
// the p-valuations of the nonzero divisors; zero divisors and missing pivots
// are free rank.
inline ZpModuleShape cokernel_shape(const BigMatrix& a, long long p) {
    const int rows = static_cast<int>(a.size());
    std::vector<bigint> diag = integer_snf(a);
    ZpModuleShape shape;
    int nonzero = 0;
    for (const bigint& d : diag)
        if (d != 0) {
            ++nonzero;
            int v = val_p(d, p);
            if (v > 0) shape.torsion_exponents.push_back(v);
        }
    std::sort(shape.torsion_exponents.begin(), shape.torsion_exponents.end());
    shape.free_rank = rows - nonzero;
    return shape;
}

}  // namespace oracle
