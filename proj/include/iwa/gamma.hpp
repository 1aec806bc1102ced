#pragma once
// The Gamma = Zp side of the theory: Weierstrass preparation over
// Lambda_1, characteristic-ideal generators of square presentations,
// finitely generated Zp[[Gamma]]-modules given by an explicit generator
// action, the exact descent identity relating e(M_{Gamma_n}) to the
// Zp-rank and the torsion descent, and the mu/lambda/nu formula fitter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iwa/errors.hpp"
#include "iwa/lambda.hpp"
#include "iwa/modules.hpp"
#include "iwa/padic.hpp"
#include "iwa/zp_matrix.hpp"

namespace iwa {

// ---------------------------------------------------------------------------
// Weierstrass preparation.

struct WeierstrassData {
    int mu;      // p-content of f
    int lambda;  // Weierstrass degree
    LambdaElement distinguished;  // monic, degree lambda, lower coeffs in (p)
    LambdaElement unit_part;      // constant coefficient a unit
};

namespace detail {

// Dense univariate coefficient vectors (index = degree), entries reduced.
using Poly = std::vector<u64>;

inline Poly poly_from_element(const LambdaElement& f, int degree_cap) {
    Poly out(static_cast<size_t>(degree_cap) + 1, 0);
    for (const auto& [a, c] : f.terms()) {
        if (a[0] > degree_cap) throw Error("degree bound below the actual degree");
        out[static_cast<size_t>(a[0])] = c;
    }
    return out;
}

inline LambdaElement element_from_poly(const PAdicContext& ctx, const Poly& f) {
    LambdaElement out(ctx, 1);
    for (size_t d = 0; d < f.size(); ++d)
        if (f[d] != 0) out = out + LambdaElement::monomial(ctx, {static_cast<int>(d)}, f[d]);
    return out;
}

inline Poly poly_mul(const PAdicContext& ctx, const Poly& a, const Poly& b, size_t cap) {
    Poly out(cap + 1, 0);
    for (size_t i = 0; i < a.size() && i <= cap; ++i) {
        if (a[i] == 0) continue;
        for (size_t j = 0; j < b.size() && i + j <= cap; ++j)
            out[i + j] = ctx.add(out[i + j], ctx.mul(a[i], b[j]));
    }
    return out;
}

// Inverse of a unit power series mod T^{cap+1}, by triangular substitution.
inline Poly poly_inverse(const PAdicContext& ctx, const Poly& a, size_t cap) {
    if (a.empty() || ctx.valuation(a[0]) != 0)
        throw PrecisionExhausted("series inverse needs a unit constant term");
    Poly inv(cap + 1, 0);
    const u64 lead = ctx.inverse(a[0]);
    inv[0] = lead;
    for (size_t d = 1; d <= cap; ++d) {
        u64 acc = 0;
        for (size_t j = 1; j <= d && j < a.size(); ++j)
            acc = ctx.add(acc, ctx.mul(a[j], inv[d - j]));
        inv[d] = ctx.mul(lead, ctx.neg(acc));
    }
    return inv;
}

inline int poly_content(const PAdicContext& ctx, const Poly& a) {
    int best = ctx.precision();
    for (u64 c : a) {
        if (c == 0) continue;
        best = std::min(best, ctx.valuation(c));
    }
    return best;
}

}  // namespace detail

// Factor f = p^mu * distinguished * unit, certified modulo
// (p^{N-guard}, T^{degree_bound+1}), by the classical division iteration:
// each correction round divides the defect by the current unit part and
// gains at least one power of p.
inline WeierstrassData weierstrass_prepare(const LambdaElement& f, int degree_bound) {
    if (f.r() != 1) throw DimensionMismatch("weierstrass preparation is univariate");
    const PAdicContext& ctx = f.ctx();
    if (f.is_zero() || f.p_content() >= ctx.certified_threshold())
        throw PrecisionExhausted("weierstrass input vanishes at certified precision");
    if (degree_bound < f.degree_in(0))
        throw Error("degree bound below the actual degree");
    // The correction rounds pull one extra T-degree into the low
    // coefficients per iteration, so the working window has to be wider
    // than the requested degree by the worst-case round count.
    const size_t cap = static_cast<size_t>(degree_bound) +
                       static_cast<size_t>(ctx.precision()) + 2;

    const int mu = f.p_content();
    detail::Poly g = detail::poly_from_element(f, degree_bound);
    g.resize(cap + 1, 0);
    for (auto& c : g) c = ctx.shift_down(c, mu);

    int lambda = -1;
    for (size_t d = 0; d < g.size(); ++d)
        if (g[d] != 0 && ctx.valuation(g[d]) == 0) {
            lambda = static_cast<int>(d);
            break;
        }
    if (lambda < 0)
        throw PrecisionExhausted("unit coefficient of the reduced part not certified");

    // g = (T^lambda + a) * unit is built up by correction rounds: with
    // defect E = g - (T^lambda + a) U and Q = E / U split below/above
    // degree lambda, the update a += Q_low, U += T^{-lambda}-shifted
    // Q_high * U leaves the new defect equal to -(a + Q_low) Q_high U,
    // one power of p smaller than E since a stays in (p).
    detail::Poly high(g.begin() + lambda, g.end());
    high.resize(cap + 1, 0);

    detail::Poly a(cap + 1, 0);   // distinguished = T^lambda + a, deg a < lambda
    detail::Poly unit = high;

    for (int round = 0; round <= ctx.precision(); ++round) {
        detail::Poly prod = detail::poly_mul(ctx, a, unit, cap);
        for (size_t d = static_cast<size_t>(lambda); d <= cap; ++d)
            prod[d] = ctx.add(prod[d], unit[d - static_cast<size_t>(lambda)]);
        detail::Poly defect(cap + 1, 0);
        bool clean = true;
        for (size_t d = 0; d <= cap; ++d) {
            defect[d] = ctx.sub(g[d], prod[d]);
            if (defect[d] != 0 && ctx.valuation(defect[d]) < ctx.certified_threshold())
                clean = false;
        }
        if (clean) break;
        if (round == ctx.precision())
            throw PrecisionExhausted("weierstrass iteration did not settle");
        detail::Poly q = detail::poly_mul(ctx, defect, detail::poly_inverse(ctx, unit, cap), cap);
        detail::Poly q_high(cap + 1, 0);
        for (size_t d = static_cast<size_t>(lambda); d <= cap; ++d)
            q_high[d - static_cast<size_t>(lambda)] = q[d];
        detail::Poly unit_gain = detail::poly_mul(ctx, q_high, unit, cap);
        for (size_t d = 0; d < static_cast<size_t>(lambda); ++d) a[d] = ctx.add(a[d], q[d]);
        for (size_t d = 0; d <= cap; ++d) unit[d] = ctx.add(unit[d], unit_gain[d]);
    }

    detail::Poly dist = a;
    dist.resize(cap + 1, 0);
    if (static_cast<size_t>(lambda) <= cap)
        dist[static_cast<size_t>(lambda)] = ctx.add(dist[static_cast<size_t>(lambda)], 1);
    if (ctx.valuation(unit[0]) != 0)
        throw PrecisionExhausted("weierstrass unit part not certified invertible");
    return WeierstrassData{mu, lambda, detail::element_from_poly(ctx, dist),
                           detail::element_from_poly(ctx, unit)};
}

// ---------------------------------------------------------------------------
// Characteristic ideals of square presentations over Lambda_1.

// Generator of the characteristic ideal of coker(A) for square A: the
// determinant, by cofactor expansion.  Torsion presentations only: a
// determinant that vanishes at certified precision is refused.
inline LambdaElement char_ideal_square(const LambdaMatrix& a) {
    if (a.r() != 1) throw DimensionMismatch("characteristic ideals live over Lambda_1");
    if (a.rows() != a.cols()) throw DimensionMismatch("characteristic ideal needs a square matrix");
    const PAdicContext& ctx = a.ctx();
    const int n = a.rows();
    if (n == 0) return LambdaElement::constant(ctx, 1, 1);
    // minors[mask] = det of the top popcount(mask) rows on column set mask,
    // filled in increasing popcount order (expansion along the newest row).
    std::vector<LambdaElement> minors(static_cast<size_t>(1) << n, LambdaElement(ctx, 1));
    minors[0] = LambdaElement::constant(ctx, 1, 1);
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        const int row = __builtin_popcount(mask) - 1;
        LambdaElement acc(ctx, 1);
        int sign = row % 2 == 0 ? 1 : -1;  // (-1)^{row + position}
        for (int col = 0; col < n; ++col) {
            if (!(mask & (1u << col))) continue;
            const LambdaElement& entry = a.at(row, col);
            if (!entry.is_zero()) {
                LambdaElement term = entry * minors[mask & ~(1u << col)];
                acc = sign > 0 ? acc + term : acc - term;
            }
            sign = -sign;
        }
        minors[mask] = acc;
    }
    LambdaElement det = minors[(1u << n) - 1];
    if (det.is_zero() || det.p_content() >= ctx.certified_threshold())
        throw SingularPresentation("determinant vanishes at certified precision");
    return det;
}

// ---------------------------------------------------------------------------
// Finitely generated Zp[[Gamma]]-modules.

// M = Zp^k + sum_j Z/p^{t_j} with the action of the topological generator
// gamma given on the k + #torsion generators (free generators first).
// Requirements: gamma is unipotent mod p (the residue criterion for a
// pro-p action; it forces det(gamma) = 1 mod p, hence invertibility), and
// the torsion-to-free blocks vanish so the torsion part is gamma-stable.
class ZpGammaModule {
public:
    ZpGammaModule(int lattice_rank, std::vector<int> torsion_exponents, ZpMatrix gamma)
        : k_(lattice_rank),
          torsion_(std::move(torsion_exponents)),
          gamma_(std::move(gamma)) {
        const PAdicContext& ctx = gamma_.ctx();
        const int size = k_ + static_cast<int>(torsion_.size());
        if (k_ < 0) throw Error("negative lattice rank");
        if (gamma_.rows() != size || gamma_.cols() != size)
            throw DimensionMismatch("gamma must act on every generator");
        for (int t : torsion_)
            if (t < 1 || t >= ctx.certified_threshold())
                throw Error("torsion exponents must lie in [1, N - guard)");
        for (int i = 0; i < k_; ++i)
            for (int j = k_; j < size; ++j)
                if (gamma_.at(i, j) != 0)
                    throw Error("torsion generators must map into the torsion part");
        if (size > 0) {
            ZpMatrix u = gamma_ - ZpMatrix::identity(ctx, size);
            ZpMatrix pw = u.power(static_cast<u64>(size));
            for (int i = 0; i < size; ++i)
                for (int j = 0; j < size; ++j)
                    if (pw.at(i, j) != 0 && ctx.valuation(pw.at(i, j)) < 1)
                        throw HypothesisFailed("gamma is not unipotent mod p");
        }
    }

    int lattice_rank() const { return k_; }
    const std::vector<int>& torsion() const { return torsion_; }
    const ZpMatrix& gamma() const { return gamma_; }
    const PAdicContext& ctx() const { return gamma_.ctx(); }
    int size() const { return k_ + static_cast<int>(torsion_.size()); }

    // The torsion part with its induced action (a gamma-stable submodule).
    ZpGammaModule torsion_part() const {
        const int t = static_cast<int>(torsion_.size());
        ZpMatrix d(ctx(), t, t);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j) d.at(i, j) = gamma_.at(k_ + i, k_ + j);
        return ZpGammaModule(0, torsion_, std::move(d));
    }

private:
    int k_;
    std::vector<int> torsion_;
    ZpMatrix gamma_;
};

// Structure of M_{Gamma_n} = coker(gamma^{p^n} - 1), the torsion relations
// adjoined.  Infinite coinvariants surface as positive free rank.
inline FiniteZpModule gamma_coinvariants(const ZpGammaModule& m, int n) {
    const PAdicContext& ctx = m.ctx();
    const int size = m.size();
    const int t = static_cast<int>(m.torsion().size());
    if (size == 0) return FiniteZpModule{{}, 0, true};
    const u64 q = static_cast<u64>(detail::checked_p_pow_int(ctx, n));
    ZpMatrix pw = m.gamma().power(q);
    ZpMatrix rel(ctx, size, size + t);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
            rel.at(i, j) = ctx.sub(pw.at(i, j), i == j ? 1 : 0);
    for (int j = 0; j < t; ++j)
        rel.at(m.lattice_rank() + j, size + j) =
            ctx.p_power(static_cast<u64>(m.torsion()[static_cast<size_t>(j)]));
    return cokernel_structure(rel);
}

// ---------------------------------------------------------------------------
// The descent identity.

struct GammaDescentLine {
    int n = 0;
    long long e_total = 0;      // e(M_{Gamma_n})
    long long e_torsion = 0;    // e(M(p)_{Gamma_n})
    long long lhs = 0;          // e(M_{Gamma_n}) - e(M_{Gamma_{n0}})
    long long rhs = 0;          // rank*(n - n0) + torsion difference
};

struct GammaDescentReport {
    int n0 = 0;
    int rank = 0;
    std::vector<GammaDescentLine> lines;
    bool pass = false;  // lhs == rhs at every level n >= n0 in range
};

// Verify the exact descent identity
//   e(M_{Gamma_n}) - e(M_{Gamma_{n0}})
//     = rank_Zp(M) * (n - n0) + e(M(p)_{Gamma_n}) - e(M(p)_{Gamma_{n0}})
// for n0 <= n, where n0 is minimal with every distinguished factor of the
// characteristic ideal of degree < p^{n0-1}(p-1); the full Weierstrass
// degree bounds every irreducible factor degree, so it drives the choice.
inline GammaDescentReport gamma_estimate_check(const ZpGammaModule& m, int n_lo, int n_hi) {
    if (n_lo < 0 || n_hi < n_lo) throw Error("bad level range");
    const PAdicContext& ctx = m.ctx();
    const int k = m.lattice_rank();

    std::vector<FiniteZpModule> totals;
    for (int n = n_lo; n <= n_hi; ++n) {
        totals.push_back(gamma_coinvariants(m, n));
        if (totals.back().rank() != 0)
            throw HypothesisFailed("coinvariants are infinite at level " + std::to_string(n));
    }

    int lambda_w = 0;
    if (k > 0) {
        LambdaMatrix char_matrix(ctx, 1, k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                LambdaElement entry(ctx, 1);
                if (i == j) entry = entry + LambdaElement::monomial(ctx, {1}, 1);
                entry = entry + LambdaElement::constant(
                                    ctx, 1,
                                    static_cast<long long>(
                                        ctx.sub(i == j ? 1 : 0, m.gamma().at(i, j))));
                char_matrix.at(i, j) = entry;
            }
        LambdaElement f = char_ideal_square(char_matrix);
        lambda_w = weierstrass_prepare(f, f.degree_in(0)).lambda;
    }
    // Minimal n0 >= 0 with lambda < p^{n0-1}(p-1), i.e. lambda*p < (p-1)*p^{n0}.
    int n0 = 0;
    long long bound = static_cast<long long>(ctx.p()) - 1;
    while (static_cast<long long>(lambda_w) * static_cast<long long>(ctx.p()) >= bound) {
        bound *= ctx.p();
        ++n0;
        if (n0 > 60) throw Error("n0 selection did not terminate");
    }

    ZpGammaModule torsion = m.torsion_part();
    const long long e_base = gamma_coinvariants(m, n0).e();
    const long long et_base = gamma_coinvariants(torsion, n0).e();

    GammaDescentReport rep;
    rep.n0 = n0;
    rep.rank = k;
    rep.pass = true;
    for (int n = n_lo; n <= n_hi; ++n) {
        GammaDescentLine line;
        line.n = n;
        line.e_total = totals[static_cast<size_t>(n - n_lo)].e();
        line.e_torsion = gamma_coinvariants(torsion, n).e();
        line.lhs = line.e_total - e_base;
        line.rhs = static_cast<long long>(k) * (n - n0) + line.e_torsion - et_base;
        if (n >= n0 && line.lhs != line.rhs) rep.pass = false;
        rep.lines.push_back(line);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// The Iwasawa formula fitter.

struct IwasawaFit {
    long long mu = 0;
    long long lambda = 0;
    long long nu = 0;
    int n_stable = 0;  // first index where e_n = mu p^n + lambda n + nu holds
    bool exact = false;
};

// Fit e_n = mu p^n + lambda n + nu.  mu comes from the final increment
// ratio, rounded; exactness requires a linear tail of at least three
// points in e_n - mu p^n.  Without such a tail the best least-squares
// integers are reported with exact = false.
inline IwasawaFit iwasawa_fit(const std::vector<long long>& e, long long p) {
    const int len = static_cast<int>(e.size());
    if (len < 4) throw SequenceTooShort("iwasawa_fit needs at least four levels");
    std::vector<double> pn(static_cast<size_t>(len));
    pn[0] = 1.0;
    for (int n = 1; n < len; ++n) pn[static_cast<size_t>(n)] = pn[static_cast<size_t>(n - 1)] * p;

    const double d_last = static_cast<double>(e[static_cast<size_t>(len - 1)] -
                                              e[static_cast<size_t>(len - 2)]);
    const long long mu = std::llround(
        d_last / (pn[static_cast<size_t>(len - 1)] - pn[static_cast<size_t>(len - 2)]));

    std::vector<double> resid(static_cast<size_t>(len));
    for (int n = 0; n < len; ++n)
        resid[static_cast<size_t>(n)] =
            static_cast<double>(e[static_cast<size_t>(n)]) - mu * pn[static_cast<size_t>(n)];

    // Longest suffix on which the residual is linear in n.
    int start = len - 1;
    const double step = resid[static_cast<size_t>(len - 1)] - resid[static_cast<size_t>(len - 2)];
    while (start > 0 &&
           resid[static_cast<size_t>(start)] - resid[static_cast<size_t>(start - 1)] == step)
        --start;

    IwasawaFit fit;
    if (len - start >= 3) {
        fit.mu = mu;
        fit.lambda = static_cast<long long>(step);
        fit.nu = static_cast<long long>(resid[static_cast<size_t>(len - 1)]) -
                 fit.lambda * (len - 1);
        fit.n_stable = start;
        fit.exact = true;
        return fit;
    }

    // Least-squares over (p^n, n, 1), rounded to integers.
    double s[3][4] = {};
    for (int n = 0; n < len; ++n) {
        const double row[3] = {pn[static_cast<size_t>(n)], static_cast<double>(n), 1.0};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) s[i][j] += row[i] * row[j];
            s[i][3] += row[i] * static_cast<double>(e[static_cast<size_t>(n)]);
        }
    }
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 3; ++row)
            if (std::abs(s[row][col]) > std::abs(s[pivot][col])) pivot = row;
        std::swap(s[col], s[pivot]);
        for (int row = 0; row < 3; ++row) {
            if (row == col || s[col][col] == 0.0) continue;
            const double factor = s[row][col] / s[col][col];
            for (int j = col; j < 4; ++j) s[row][j] -= factor * s[col][j];
        }
    }
    fit.mu = s[0][0] != 0.0 ? std::llround(s[0][3] / s[0][0]) : 0;
    fit.lambda = s[1][1] != 0.0 ? std::llround(s[1][3] / s[1][1]) : 0;
    fit.nu = s[2][2] != 0.0 ? std::llround(s[2][3] / s[2][2]) : 0;
    fit.n_stable = len;
    fit.exact = false;
    return fit;
}

}  // namespace iwa
