#pragma once

// Arithmetic in Lambda_r = Zp[[T_1,...,T_r]] restricted to polynomial
// representatives, together with the finite-level machinery: the omega
// elements omega_{m,i} = (1+T_i)^{p^m} - 1 cutting out level m, the monomial
// basis of the quotient Lambda_r/(omega_{m,1},...,omega_{m,r}), regular
// representation matrices, the alpha divisibility witnesses, and ring
// automorphisms induced by automorphisms of the group Zp^r (tau_i = 1 + T_i).

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "iwa/errors.hpp"
#include "iwa/padic.hpp"
#include "iwa/zp_matrix.hpp"

namespace iwa {

// Exponent vector of a monomial T_1^{a_1} ... T_r^{a_r}.  std::vector's
// lexicographic operator< doubles as the global monomial order.
using Exponents = std::vector<int>;

namespace detail {

// p^m as a polynomial degree.  Degrees live in int; refuse anything that
// could not possibly fit in a dense quotient basis.
inline int checked_p_pow_int(const PAdicContext& ctx, int m) {
    if (m < 0) throw Error("negative level");
    u64 v = 1;
    for (int k = 0; k < m; ++k) {
        if (v > (u64{1} << 30) / ctx.p())
            throw CeilingExceeded("p^m exceeds the supported degree range");
        v *= ctx.p();
    }
    return static_cast<int>(v);
}

}  // namespace detail

class LambdaElement {
public:
    LambdaElement(PAdicContext ctx, int r) : ctx_(std::move(ctx)), r_(r) {
        if (r < 0) throw DimensionMismatch("negative variable count");
    }

    static LambdaElement constant(const PAdicContext& ctx, int r, long long c) {
        LambdaElement f(ctx, r);
        f.add_term(Exponents(static_cast<size_t>(r), 0), ctx.reduce_int(c));
        return f;
    }

    // The variable T_i (0-based index).
    static LambdaElement variable(const PAdicContext& ctx, int r, int i) {
        if (i < 0 || i >= r) throw DimensionMismatch("variable index out of range");
        Exponents a(static_cast<size_t>(r), 0);
        a[static_cast<size_t>(i)] = 1;
        return monomial(ctx, a, 1);
    }

    static LambdaElement monomial(const PAdicContext& ctx, Exponents a, u64 coeff) {
        LambdaElement f(ctx, static_cast<int>(a.size()));
        for (int e : a)
            if (e < 0) throw Error("monomial exponents must be nonnegative");
        f.add_term(std::move(a), coeff % ctx.modulus());
        return f;
    }

    int r() const { return r_; }
    const PAdicContext& ctx() const { return ctx_; }
    bool is_zero() const { return terms_.empty(); }
    const std::map<Exponents, u64>& terms() const { return terms_; }

    u64 coeff(const Exponents& a) const {
        auto it = terms_.find(a);
        return it == terms_.end() ? 0 : it->second;
    }

    // Adds c * T^a, merging with an existing term and dropping zeros so that
    // no stored coefficient is ever 0 mod p^N.
    void add_term(Exponents a, u64 c) {
        if (static_cast<int>(a.size()) != r_)
            throw DimensionMismatch("exponent vector arity mismatch");
        if (c == 0) return;
        auto it = terms_.find(a);
        if (it == terms_.end()) {
            terms_.emplace(std::move(a), c);
        } else {
            it->second = ctx_.add(it->second, c);
            if (it->second == 0) terms_.erase(it);
        }
    }

    LambdaElement operator+(const LambdaElement& o) const {
        check_match(o);
        LambdaElement s = *this;
        for (const auto& [a, c] : o.terms_) s.add_term(a, c);
        return s;
    }

    LambdaElement operator-(const LambdaElement& o) const {
        check_match(o);
        LambdaElement s = *this;
        for (const auto& [a, c] : o.terms_) s.add_term(a, ctx_.neg(c));
        return s;
    }

    LambdaElement operator-() const {
        LambdaElement s(ctx_, r_);
        for (const auto& [a, c] : terms_) s.terms_.emplace(a, ctx_.neg(c));
        return s;
    }

    LambdaElement operator*(const LambdaElement& o) const {
        check_match(o);
        LambdaElement prod(ctx_, r_);
        for (const auto& [a, ca] : terms_) {
            for (const auto& [b, cb] : o.terms_) {
                u64 c = ctx_.mul(ca, cb);
                if (c == 0) continue;
                Exponents e(static_cast<size_t>(r_));
                for (int i = 0; i < r_; ++i)
                    e[static_cast<size_t>(i)] =
                        a[static_cast<size_t>(i)] + b[static_cast<size_t>(i)];
                prod.add_term(std::move(e), c);
            }
        }
        return prod;
    }

    LambdaElement scaled(u64 c) const {
        LambdaElement s(ctx_, r_);
        for (const auto& [a, v] : terms_) s.add_term(a, ctx_.mul(v, c));
        return s;
    }

    LambdaElement pow(u64 e) const {
        LambdaElement acc = constant(ctx_, r_, 1);
        LambdaElement base = *this;
        while (e != 0) {
            if (e & 1) acc = acc * base;
            e >>= 1;
            if (e != 0) base = base * base;
        }
        return acc;
    }

    bool operator==(const LambdaElement& o) const {
        return r_ == o.r_ && ctx_.compatible(o.ctx_) && terms_ == o.terms_;
    }

    int degree_in(int i) const {
        int d = 0;
        for (const auto& [a, c] : terms_) d = std::max(d, a[static_cast<size_t>(i)]);
        return d;
    }

    // Largest k with p^k dividing every coefficient (precision N for zero).
    int p_content() const {
        int best = ctx_.precision();
        for (const auto& [a, c] : terms_) best = std::min(best, ctx_.valuation(c));
        return best;
    }

    std::string to_string() const {
        if (terms_.empty()) return "0";
        std::ostringstream os;
        bool first = true;
        for (const auto& [a, c] : terms_) {
            if (!first) os << " + ";
            first = false;
            bool has_var = false;
            for (int e : a) has_var = has_var || e > 0;
            if (!has_var || c != 1) os << c;
            bool printed = !has_var || c != 1;
            for (int i = 0; i < r_; ++i) {
                int e = a[static_cast<size_t>(i)];
                if (e == 0) continue;
                if (printed) os << '*';
                os << 'T' << (i + 1);
                if (e > 1) os << '^' << e;
                printed = true;
            }
        }
        return os.str();
    }

private:
    void check_match(const LambdaElement& o) const {
        if (r_ != o.r_) throw DimensionMismatch("mixed variable counts");
        if (!ctx_.compatible(o.ctx_)) throw Error("mixed p-adic contexts");
    }

    PAdicContext ctx_;
    int r_;
    std::map<Exponents, u64> terms_;
};

// omega_{m,i} = (1 + T_i)^{p^m} - 1, the relation expressing that
// tau_i^{p^m} acts trivially at level m.
inline LambdaElement omega(const PAdicContext& ctx, int r, int m, int i) {
    u64 e = static_cast<u64>(detail::checked_p_pow_int(ctx, m));
    LambdaElement tau =
        LambdaElement::constant(ctx, r, 1) + LambdaElement::variable(ctx, r, i);
    return tau.pow(e) - LambdaElement::constant(ctx, r, 1);
}

struct OmegaIdeal {
    int m;
    std::vector<LambdaElement> generators;
};

inline OmegaIdeal omega_ideal(const PAdicContext& ctx, int r, int m) {
    OmegaIdeal ideal{m, {}};
    ideal.generators.reserve(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) ideal.generators.push_back(omega(ctx, r, m, i));
    return ideal;
}

// The p^{rm} monomials T^a with 0 <= a_i < p^m, ordered lexicographically
// (a_1 most significant).  Free Zp-basis of Lambda_r/(omega_{m,*}).
class QuotientBasis {
public:
    QuotientBasis(const PAdicContext& ctx, int r, int m)
        : r_(r), m_(m), side_(detail::checked_p_pow_int(ctx, m)) {
        if (r < 0) throw DimensionMismatch("negative variable count");
        u64 d = 1;
        for (int i = 0; i < r; ++i) {
            if (d > (u64{1} << 30) / static_cast<u64>(side_))
                throw CeilingExceeded("quotient basis dimension exceeds the supported range");
            d *= static_cast<u64>(side_);
        }
        dim_ = d;
    }

    int r() const { return r_; }
    int m() const { return m_; }
    int side() const { return side_; }  // p^m
    u64 dim() const { return dim_; }    // p^{rm}

    u64 index(const Exponents& a) const {
        if (static_cast<int>(a.size()) != r_)
            throw DimensionMismatch("exponent vector arity mismatch");
        u64 idx = 0;
        for (int i = 0; i < r_; ++i) {
            int e = a[static_cast<size_t>(i)];
            if (e < 0 || e >= side_) throw Error("exponent outside the quotient basis");
            idx = idx * static_cast<u64>(side_) + static_cast<u64>(e);
        }
        return idx;
    }

    Exponents exponents(u64 idx) const {
        Exponents a(static_cast<size_t>(r_), 0);
        for (int i = r_ - 1; i >= 0; --i) {
            a[static_cast<size_t>(i)] = static_cast<int>(idx % static_cast<u64>(side_));
            idx /= static_cast<u64>(side_);
        }
        return a;
    }

private:
    int r_;
    int m_;
    int side_;
    u64 dim_;
};

// Unique representative of f with every exponent < p^m, by iterated division
// by the omega generators (each monic of degree p^m in its variable):
// T_i^{p^m} is replaced by T_i^{p^m} - omega_{m,i}, which has degree < p^m.
// Linear in f; exact mod p^N.
inline LambdaElement reduce_mod_omega(const LambdaElement& f, int m) {
    const PAdicContext& ctx = f.ctx();
    const int r = f.r();
    const int side = detail::checked_p_pow_int(ctx, m);

    // tail[k] = coefficient of T^k in T^{p^m} - omega (univariate model),
    // valid for every variable by symmetry.  tail[0] = 0 always.
    std::vector<u64> tail(static_cast<size_t>(side), 0);
    {
        LambdaElement om = omega(ctx, 1, m, 0);
        for (const auto& [a, c] : om.terms()) {
            int k = a[0];
            if (k < side) tail[static_cast<size_t>(k)] = ctx.neg(c);
        }
    }

    std::map<Exponents, u64> cur(f.terms());
    LambdaElement done(ctx, r);
    while (!cur.empty()) {
        std::map<Exponents, u64> next;
        auto accumulate = [&](Exponents e, u64 c) {
            auto it = next.find(e);
            if (it == next.end()) {
                next.emplace(std::move(e), c);
            } else {
                it->second = ctx.add(it->second, c);
                if (it->second == 0) next.erase(it);
            }
        };
        for (const auto& [a, c] : cur) {
            int off = -1;
            for (int i = 0; i < r; ++i)
                if (a[static_cast<size_t>(i)] >= side) {
                    off = i;
                    break;
                }
            if (off < 0) {
                done.add_term(a, c);
                continue;
            }
            Exponents base = a;
            base[static_cast<size_t>(off)] -= side;
            for (int k = 1; k < side; ++k) {
                u64 t = tail[static_cast<size_t>(k)];
                if (t == 0) continue;
                u64 add = ctx.mul(c, t);
                if (add == 0) continue;
                Exponents e = base;
                e[static_cast<size_t>(off)] += k;
                accumulate(std::move(e), add);
            }
        }
        cur = std::move(next);
    }
    return done;
}

// Coordinates of f in QuotientBasis(m), reducing first.
inline std::vector<u64> coordinates(const LambdaElement& f, const QuotientBasis& qb) {
    if (f.r() != qb.r()) throw DimensionMismatch("basis arity mismatch");
    LambdaElement red = reduce_mod_omega(f, qb.m());
    std::vector<u64> v(qb.dim(), 0);
    for (const auto& [a, c] : red.terms()) v[qb.index(a)] = c;
    return v;
}

namespace detail {

// Content key identifying an element up to (p, N, r) and its exact terms.
inline std::string element_key(const LambdaElement& f) {
    std::ostringstream os;
    os << f.ctx().p() << ';' << f.ctx().precision() << ';' << f.r();
    for (const auto& [a, c] : f.terms()) {
        os << '|';
        for (int e : a) os << e << ',';
        os << c;
    }
    return os.str();
}

inline std::string matrix_key(const ZpMatrix& m) {
    std::ostringstream os;
    os << m.ctx().p() << ';' << m.ctx().precision() << ';' << m.rows() << 'x'
       << m.cols();
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) os << ',' << m.at(i, j);
    return os.str();
}

// Read-mostly concurrent cache; values are returned by copy.
template <typename V>
class ConcurrentCache {
public:
    std::optional<V> get(const std::string& k) const {
        std::shared_lock lock(mtx_);
        auto it = map_.find(k);
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& k, const V& v) {
        std::unique_lock lock(mtx_);
        map_.emplace(k, v);
    }

private:
    mutable std::shared_mutex mtx_;
    std::unordered_map<std::string, V> map_;
};

}  // namespace detail

// Matrix of (g -> f * g) on Lambda_r/(omega_{m,*}) in QuotientBasis(m).
// Multiplicative: multiplication_matrix(f*g, m) equals the matrix product.
inline ZpMatrix multiplication_matrix(const LambdaElement& f, int m) {
    static detail::ConcurrentCache<ZpMatrix> cache;
    const std::string key = detail::element_key(f) + "#m=" + std::to_string(m);
    if (auto hit = cache.get(key)) return *hit;

    const PAdicContext& ctx = f.ctx();
    QuotientBasis qb(ctx, f.r(), m);
    LambdaElement rf = reduce_mod_omega(f, m);
    ZpMatrix mat(ctx, static_cast<int>(qb.dim()), static_cast<int>(qb.dim()));
    for (u64 j = 0; j < qb.dim(); ++j) {
        LambdaElement mono = LambdaElement::monomial(ctx, qb.exponents(j), 1);
        LambdaElement col = reduce_mod_omega(rf * mono, m);
        for (const auto& [a, c] : col.terms())
            mat.at(static_cast<int>(qb.index(a)), static_cast<int>(j)) = c;
    }
    cache.put(key, mat);
    return mat;
}

// prod_i tau_i^{e_i} = prod_i (1 + T_i)^{e_i}, expanded.
inline LambdaElement tau_power(const PAdicContext& ctx, int r,
                               const std::vector<u64>& exps) {
    if (static_cast<int>(exps.size()) != r)
        throw DimensionMismatch("exponent vector arity mismatch");
    LambdaElement res = LambdaElement::constant(ctx, r, 1);
    for (int i = 0; i < r; ++i) {
        if (exps[static_cast<size_t>(i)] == 0) continue;
        LambdaElement tau =
            LambdaElement::constant(ctx, r, 1) + LambdaElement::variable(ctx, r, i);
        res = res * tau.pow(exps[static_cast<size_t>(i)]);
    }
    return res;
}

// alpha(tau, m, m0) = sum_{j=0}^{p^{m-m0}-1} (tau^{tau_vec})^{j p^{m0}},
// the exact witness of (tau^{p^m} - 1) = alpha * (tau^{p^{m0}} - 1).
// Requires at least one coordinate of tau_vec to be a p-adic unit.
inline LambdaElement alpha_element(const PAdicContext& ctx,
                                   const std::vector<long long>& tau_vec, int m,
                                   int m0) {
    const int r = static_cast<int>(tau_vec.size());
    if (m0 < 0 || m < m0) throw Error("alpha_element requires 0 <= m0 <= m");
    bool has_unit = false;
    for (long long t : tau_vec) {
        if (t < 0) throw Error("tau exponents must be nonnegative");
        if (t % static_cast<long long>(ctx.p()) != 0) has_unit = true;
    }
    if (!has_unit)
        throw TauInH1("tau lies in H^p: every exponent is divisible by p");

    u64 pm0 = 1;
    for (int k = 0; k < m0; ++k) pm0 *= ctx.p();
    std::vector<u64> scaled(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i)
        scaled[static_cast<size_t>(i)] =
            static_cast<u64>(tau_vec[static_cast<size_t>(i)]) * pm0;
    LambdaElement h = tau_power(ctx, r, scaled);

    u64 count = 1;
    for (int k = 0; k < m - m0; ++k) count *= ctx.p();
    LambdaElement sum = LambdaElement::constant(ctx, r, 1);
    LambdaElement acc = LambdaElement::constant(ctx, r, 1);
    for (u64 j = 1; j < count; ++j) {
        acc = acc * h;
        sum = sum + acc;
    }
    return sum;
}

// Ring automorphism of Lambda_r induced by a group automorphism rho of Zp^r
// with rho congruent to the identity mod p (a pro-p action):
// tau_i -> prod_j tau_j^{rho_{ji}}.
class RingAutomorphism {
public:
    explicit RingAutomorphism(ZpMatrix rho) : rho_(std::move(rho)) {
        if (rho_.rows() != rho_.cols())
            throw DimensionMismatch("automorphism matrix must be square");
        const u64 p = rho_.ctx().p();
        for (int i = 0; i < rho_.rows(); ++i)
            for (int j = 0; j < rho_.cols(); ++j) {
                u64 want = (i == j) ? 1 : 0;
                if (rho_.at(i, j) % p != want)
                    throw Error("automorphism matrix must be congruent to the identity mod p");
            }
    }

    static RingAutomorphism identity_map(const PAdicContext& ctx, int r) {
        return RingAutomorphism(ZpMatrix::identity(ctx, r));
    }

    int r() const { return rho_.rows(); }
    const ZpMatrix& rho() const { return rho_; }
    const PAdicContext& ctx() const { return rho_.ctx(); }

    bool is_identity() const {
        return rho_ == ZpMatrix::identity(rho_.ctx(), rho_.rows());
    }

private:
    ZpMatrix rho_;
};

// Multiplication with reduction at level m.
inline LambdaElement mul_reduced(const LambdaElement& a, const LambdaElement& b,
                                 int m) {
    return reduce_mod_omega(a * b, m);
}

inline LambdaElement pow_reduced(const LambdaElement& base, u64 e, int m) {
    LambdaElement acc = LambdaElement::constant(base.ctx(), base.r(), 1);
    LambdaElement b = reduce_mod_omega(base, m);
    while (e != 0) {
        if (e & 1) acc = mul_reduced(acc, b, m);
        e >>= 1;
        if (e != 0) b = mul_reduced(b, b, m);
    }
    return acc;
}

namespace detail {

// Per-(automorphism, level) tables: powers[i][k] is the reduced image of
// T_i^k under the substitution, for k < p^m.
struct AutomorphismTables {
    std::vector<std::vector<LambdaElement>> powers;
};

inline std::shared_ptr<const AutomorphismTables> automorphism_tables(
    const RingAutomorphism& sigma, int m) {
    static ConcurrentCache<std::shared_ptr<const AutomorphismTables>> cache;
    const std::string key = matrix_key(sigma.rho()) + "#m=" + std::to_string(m);
    if (auto hit = cache.get(key)) return *hit;

    const PAdicContext& ctx = sigma.ctx();
    const int r = sigma.r();
    const int side = checked_p_pow_int(ctx, m);
    const u64 pm = static_cast<u64>(side);
    auto tables = std::make_shared<AutomorphismTables>();
    tables->powers.resize(static_cast<size_t>(r));
    const LambdaElement one = LambdaElement::constant(ctx, r, 1);
    for (int i = 0; i < r; ++i) {
        // Image of tau_i: exponents matter only mod p^m since tau^{p^m} = 1
        // in the quotient.
        std::vector<u64> e(static_cast<size_t>(r));
        for (int j = 0; j < r; ++j)
            e[static_cast<size_t>(j)] = sigma.rho().at(j, i) % pm;
        LambdaElement s = reduce_mod_omega(tau_power(ctx, r, e), m);
        // The substitution must send the level-m omega ideal into itself;
        // equivalently the image of tau_i^{p^m} must be 1 in the quotient.
        if (!(pow_reduced(s, pm, m) == one))
            throw Error("automorphism does not preserve the level-" +
                        std::to_string(m) + " omega ideal");
        LambdaElement x = s - one;
        auto& table = tables->powers[static_cast<size_t>(i)];
        table.reserve(static_cast<size_t>(side));
        table.push_back(one);
        for (int k = 1; k < side; ++k)
            table.push_back(mul_reduced(table.back(), x, m));
    }
    cache.put(key, tables);
    return tables;
}

}  // namespace detail

// Numeric check that sigma sends (omega_{m,*}) into itself, recomputed from
// scratch: the image of each omega generator must reduce to zero at level m.
inline bool automorphism_preserves_omega(const RingAutomorphism& sigma, int m) {
    const PAdicContext& ctx = sigma.ctx();
    const int r = sigma.r();
    const u64 pm = static_cast<u64>(detail::checked_p_pow_int(ctx, m));
    const LambdaElement one = LambdaElement::constant(ctx, r, 1);
    for (int i = 0; i < r; ++i) {
        std::vector<u64> e(static_cast<size_t>(r));
        for (int j = 0; j < r; ++j)
            e[static_cast<size_t>(j)] = sigma.rho().at(j, i) % pm;
        LambdaElement s = reduce_mod_omega(tau_power(ctx, r, e), m);
        // image of omega_{m,i} is s^{p^m} - 1
        if (!(pow_reduced(s, pm, m) == one)) return false;
    }
    return true;
}

// Image of f under sigma inside Lambda_r/(omega_{m,*}); a ring homomorphism
// of the quotient.
inline LambdaElement apply_automorphism(const RingAutomorphism& sigma,
                                        const LambdaElement& f, int m) {
    if (sigma.r() != f.r())
        throw DimensionMismatch("automorphism arity does not match the element");
    const PAdicContext& ctx = f.ctx();
    const int r = f.r();
    auto tables = detail::automorphism_tables(sigma, m);
    LambdaElement red = reduce_mod_omega(f, m);
    LambdaElement out(ctx, r);
    for (const auto& [a, c] : red.terms()) {
        LambdaElement term =
            LambdaElement::monomial(ctx, Exponents(static_cast<size_t>(r), 0), c);
        for (int i = 0; i < r; ++i) {
            int e = a[static_cast<size_t>(i)];
            if (e > 0)
                term = mul_reduced(
                    term, tables->powers[static_cast<size_t>(i)][static_cast<size_t>(e)], m);
        }
        out = out + term;
    }
    return out;
}

// Matrix of sigma acting on Lambda_r/(omega_{m,*}) in QuotientBasis(m).
inline ZpMatrix automorphism_matrix(const RingAutomorphism& sigma, int m) {
    static detail::ConcurrentCache<ZpMatrix> cache;
    const std::string key =
        "aut:" + detail::matrix_key(sigma.rho()) + "#m=" + std::to_string(m);
    if (auto hit = cache.get(key)) return *hit;

    const PAdicContext& ctx = sigma.ctx();
    QuotientBasis qb(ctx, sigma.r(), m);
    auto tables = detail::automorphism_tables(sigma, m);
    ZpMatrix mat(ctx, static_cast<int>(qb.dim()), static_cast<int>(qb.dim()));
    for (u64 j = 0; j < qb.dim(); ++j) {
        Exponents a = qb.exponents(j);
        LambdaElement img = LambdaElement::constant(ctx, sigma.r(), 1);
        for (int i = 0; i < sigma.r(); ++i) {
            int e = a[static_cast<size_t>(i)];
            if (e > 0)
                img = mul_reduced(
                    img, tables->powers[static_cast<size_t>(i)][static_cast<size_t>(e)], m);
        }
        for (const auto& [b, c] : img.terms())
            mat.at(static_cast<int>(qb.index(b)), static_cast<int>(j)) = c;
    }
    cache.put(key, mat);
    return mat;
}

}  // namespace iwa
