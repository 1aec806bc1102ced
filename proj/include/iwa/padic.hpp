#pragma once

#include <cstdint>
#include <string>

#include "errors.hpp"

namespace iwa {

using u64 = std::uint64_t;
using u128 = unsigned __int128;

// What escalate_and_retry does when the precision ceiling is reached
// without certification.
enum class EscalationPolicy { Throw, ReturnUncertified };

namespace detail {

inline bool is_prime(u64 n) {
    if (n < 2) return false;
    for (u64 d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

// Largest N with p^N representable in 64 bits; products of two residues
// then fit in u128, so all modular arithmetic below is exact.
inline int max_supported_precision(u64 p) {
    int n = 0;
    u64 v = 1;
    while (v <= (~u64{0}) / p) {
        v *= p;
        ++n;
    }
    return n;
}

}  // namespace detail

// Exact arithmetic in Zp at capped absolute precision: every scalar is a
// canonical residue in [0, p^N).  Valuations at or above N - guard are
// indeterminate and reported as capped.
class PAdicContext {
public:
    PAdicContext(u64 p, int precision, int precision_max, int guard,
                 EscalationPolicy policy = EscalationPolicy::Throw)
        : p_(p), n_(precision), n_max_(precision_max), guard_(guard),
          policy_(policy) {
        if (!detail::is_prime(p)) throw Error("modulus must be prime, got " + std::to_string(p));
        if (!(0 < guard && guard < n_ && n_ <= n_max_))
            throw Error("precision parameters must satisfy 0 < guard < N <= N_max");
        if (n_max_ > detail::max_supported_precision(p))
            throw Error("p^N_max does not fit in 64 bits for p = " + std::to_string(p));
        pn_ = 1;
        for (int i = 0; i < n_; ++i) pn_ *= p;
    }

    u64 p() const { return p_; }
    int precision() const { return n_; }
    int precision_max() const { return n_max_; }
    int guard() const { return guard_; }
    EscalationPolicy policy() const { return policy_; }

    // p^N, the working modulus.
    u64 modulus() const { return pn_; }

    // Valuations below this threshold are exact; at or above it, capped.
    int certified_threshold() const { return n_ - guard_; }

    // Same prime and policy, doubled working precision capped at N_max.
    PAdicContext escalated() const {
        int next = n_ * 2 > n_max_ ? n_max_ : n_ * 2;
        return PAdicContext(p_, next, n_max_, guard_, policy_);
    }

    bool compatible(const PAdicContext& o) const {
        return p_ == o.p_ && n_ == o.n_ && guard_ == o.guard_;
    }

    // --- scalar arithmetic on canonical residues ---

    u64 reduce_int(long long v) const {
        long long m = static_cast<long long>(pn_);
        long long r = v % m;
        if (r < 0) r += m;
        return static_cast<u64>(r);
    }

    u64 add(u64 a, u64 b) const {
        u64 s = a + b;  // a, b < p^N <= 2^63-ish; no overflow for supported primes
        return s >= pn_ ? s - pn_ : s;
    }

    u64 sub(u64 a, u64 b) const { return a >= b ? a - b : a + (pn_ - b); }

    u64 neg(u64 a) const { return a == 0 ? 0 : pn_ - a; }

    u64 mul(u64 a, u64 b) const {
        return static_cast<u64>((static_cast<u128>(a) * b) % pn_);
    }

    u64 pow(u64 a, u64 e) const {
        u64 r = 1 % pn_;
        while (e) {
            if (e & 1) r = mul(r, a);
            a = mul(a, a);
            e >>= 1;
        }
        return r;
    }

    // p-adic valuation of the residue; 0 maps to N (indistinguishable from higher).
    int valuation(u64 a) const {
        if (a == 0) return n_;
        int v = 0;
        while (a % p_ == 0) {
            a /= p_;
            ++v;
        }
        return v;
    }

    bool is_unit(u64 a) const { return a % p_ != 0; }

    // Inverse of a unit residue mod p^N (extended Euclid).
    u64 inverse(u64 a) const {
        if (!is_unit(a)) throw Error("inverse of a non-unit residue");
        long long t = 0, new_t = 1;
        long long r = static_cast<long long>(pn_), new_r = static_cast<long long>(a);
        while (new_r != 0) {
            long long q = r / new_r;
            long long tmp = t - q * new_t;
            t = new_t;
            new_t = tmp;
            tmp = r - q * new_r;
            r = new_r;
            new_r = tmp;
        }
        if (t < 0) t += static_cast<long long>(pn_);
        return static_cast<u64>(t);
    }

    // Exact division by p^v; requires v <= valuation(a).
    u64 shift_down(u64 a, int v) const {
        for (int i = 0; i < v; ++i) {
            if (a % p_ != 0) throw Error("inexact division by p");
            a /= p_;
        }
        return a;
    }

    u64 p_power(int k) const {
        u64 r = 1;
        for (int i = 0; i < k; ++i) r *= p_;
        return r;
    }

private:
    u64 p_;
    int n_;
    int n_max_;
    int guard_;
    EscalationPolicy policy_;
    u64 pn_;
};

}  // namespace iwa
