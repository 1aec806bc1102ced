#pragma once
// Semidirect towers: a Lambda_r-module carrying a compatible semilinear
// gamma-action (gamma(lambda x) = sigma(lambda) gamma(x) for the ring
// automorphism sigma of the conjugation), the e_{n,m} grid of
// G_{n,m}-coinvariant exponents, and fitters for the diagonal growth laws.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "iwa/errors.hpp"
#include "iwa/lambda.hpp"
#include "iwa/modules.hpp"
#include "iwa/padic.hpp"
#include "iwa/zp_matrix.hpp"

namespace iwa {

namespace detail {

inline u64 p_power_u64(const PAdicContext& ctx, int n) {
    if (n < 0 || n > 39) throw Error("level exponent outside the supported range");
    u64 out = 1;
    for (int i = 0; i < n; ++i) {
        if (out > (~0ULL) / ctx.p()) throw Error("level exponent overflows");
        out *= ctx.p();
    }
    return out;
}

inline std::vector<u64> mat_vec(const ZpMatrix& a, const std::vector<u64>& v) {
    if (static_cast<size_t>(a.cols()) != v.size())
        throw DimensionMismatch("matrix-vector shape");
    const PAdicContext& ctx = a.ctx();
    std::vector<u64> out(static_cast<size_t>(a.rows()), 0);
    for (int i = 0; i < a.rows(); ++i) {
        u64 acc = 0;
        for (int j = 0; j < a.cols(); ++j)
            acc = ctx.add(acc, ctx.mul(a.at(i, j), v[static_cast<size_t>(j)]));
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

inline std::vector<u64> column_of(const ZpMatrix& a, int j) {
    std::vector<u64> out(static_cast<size_t>(a.rows()), 0);
    for (int i = 0; i < a.rows(); ++i) out[static_cast<size_t>(i)] = a.at(i, j);
    return out;
}

inline ZpMatrix block_diagonal(const ZpMatrix& block, int copies) {
    const int d = block.rows();
    if (block.cols() != d) throw DimensionMismatch("diagonal blocks must be square");
    ZpMatrix out(block.ctx(), d * copies, d * copies);
    for (int b = 0; b < copies; ++b)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out.at(b * d + i, b * d + j) = block.at(i, j);
    return out;
}

// Independent work items drawn from a shared counter; the first exception
// wins and is rethrown after all workers finish.  jobs <= 0 means one
// worker per hardware thread.  Results are written by item index, so the
// outcome does not depend on the schedule.
template <typename F>
inline void for_each_cell(int count, int jobs, F&& job) {
    if (count <= 0) return;
    int workers = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 1;
    workers = std::min(workers, count);
    std::atomic<int> next(0);
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) job(i);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Semidirect modules.

// A module presentation over Lambda_r together with the action of the extra
// generator gamma: conjugation on the Zp^r part (rho, a pro-p automorphism)
// and the images of the module generators (Phi, a b x b matrix over
// Lambda_r).  gamma acts semilinearly, x_j -> sum_i Phi_{ij} sigma(x_i)
// coordinates; on the level-m free cover this is the expanded Phi composed
// with the substitution operator.
class SemidirectModule {
public:
    SemidirectModule(ModulePresentation base, RingAutomorphism rho, LambdaMatrix phi)
        : base_(std::move(base)), rho_(std::move(rho)), phi_(std::move(phi)) {
        if (rho_.r() != base_.r())
            throw DimensionMismatch("conjugation arity does not match the module ring");
        if (phi_.r() != base_.r())
            throw DimensionMismatch("gamma images over a different ring");
        if (phi_.rows() != base_.b() || phi_.cols() != base_.b())
            throw DimensionMismatch("gamma images must form a b x b matrix");
        if (rho_.ctx().p() != base_.ctx().p() ||
            rho_.ctx().precision() != base_.ctx().precision())
            throw Error("conjugation and module use different contexts");
        check_unipotent_mod_p();
    }

    static SemidirectModule trivial(ModulePresentation base) {
        const PAdicContext& ctx = base.ctx();
        const int r = base.r();
        const int b = base.b();
        return SemidirectModule(std::move(base), RingAutomorphism::identity_map(ctx, r),
                                LambdaMatrix::identity(ctx, r, b));
    }

    const ModulePresentation& base() const { return base_; }
    const RingAutomorphism& rho() const { return rho_; }
    const LambdaMatrix& phi() const { return phi_; }
    const PAdicContext& ctx() const { return base_.ctx(); }

private:
    // The induced action on M_{H_0}/(p) must be unipotent (the whole group
    // is pro-p); since the level-0 substitution is trivial this reads off
    // the constant terms of Phi modulo the relations and p.
    void check_unipotent_mod_p() const {
        const PAdicContext& ctx = base_.ctx();
        const int b = base_.b();
        if (b == 0) return;
        ZpMatrix g0 = phi_.expand(0);  // level-0 blocks are the constant terms
        HowellSpan span(ctx, b);
        ZpMatrix rel0 = base_.relations().expand(0);
        for (int j = 0; j < rel0.cols(); ++j) span.insert(detail::column_of(rel0, j));
        for (int i = 0; i < b; ++i) {
            std::vector<u64> pe(static_cast<size_t>(b), 0);
            pe[static_cast<size_t>(i)] = ctx.reduce_int(static_cast<long long>(ctx.p()));
            span.insert(std::move(pe));
        }
        // Relations must be stable or the induced map is not defined at all.
        for (int j = 0; j < rel0.cols(); ++j)
            if (!span.contains(detail::mat_vec(g0, detail::column_of(rel0, j))))
                throw SemilinearityBroken("gamma does not preserve relation " +
                                          std::to_string(j) + " at level 0");
        ZpMatrix nilpart = (g0 - ZpMatrix::identity(ctx, b)).power(static_cast<u64>(b));
        for (int j = 0; j < b; ++j)
            if (!span.contains(detail::column_of(nilpart, j)))
                throw HypothesisFailed("gamma is not unipotent mod p on the base coinvariants");
    }

    ModulePresentation base_;
    RingAutomorphism rho_;
    LambdaMatrix phi_;
};

// ---------------------------------------------------------------------------
// The gamma operator at a level.

// Matrix of gamma on the level-m free cover (Lambda_r/omega-ideal)^b, with
// the relation submodule verified to be preserved so the induced operator
// on the coinvariants is well defined.
inline ZpMatrix gamma_on_coinvariants(const SemidirectModule& x, int m) {
    const PAdicContext& ctx = x.ctx();
    const int b = x.base().b();
    ZpMatrix gamma = x.phi().expand(m) *
                     detail::block_diagonal(automorphism_matrix(x.rho(), m), b);
    ZpMatrix rel = x.base().relations().expand(m);
    if (rel.cols() > 0) {
        HowellSpan span(ctx, rel.rows());
        for (int j = 0; j < rel.cols(); ++j) span.insert(detail::column_of(rel, j));
        const int dim = rel.rows() / std::max(b, 1);
        for (int j = 0; j < rel.cols(); ++j)
            if (!span.contains(detail::mat_vec(gamma, detail::column_of(rel, j))))
                throw SemilinearityBroken("gamma does not preserve relation " +
                                          std::to_string(j / std::max(dim, 1)) +
                                          " at level " + std::to_string(m));
    }
    return gamma;
}

// Structure of X_{G_{n,m}} = (X_{H_m})_{Gamma_n}: the level-m coinvariants
// divided by the image of gamma^{p^n} - 1, the power taken exactly by
// square-and-multiply.
inline FiniteZpModule g_coinvariants(const SemidirectModule& x, int n, int m) {
    if (n < 0 || m < 0) throw Error("levels must be nonnegative");
    ZpMatrix gamma = gamma_on_coinvariants(x, m);
    ZpMatrix descent =
        gamma.power(detail::p_power_u64(x.ctx(), n)) - ZpMatrix::identity(x.ctx(), gamma.rows());
    return cokernel_structure(x.base().relations().expand(m).augment(descent));
}

// ---------------------------------------------------------------------------
// The e_{n,m} grid.

struct TowerCell {
    int n = 0;
    int m = 0;
    long long e = 0;
    long long rank = 0;
    bool certified = true;
};

class TowerTable {
public:
    TowerTable(int n_max, int m_max, std::vector<TowerCell> cells)
        : n_max_(n_max), m_max_(m_max), cells_(std::move(cells)) {
        if (cells_.size() != static_cast<size_t>(n_max_ + 1) * static_cast<size_t>(m_max_ + 1))
            throw Error("tower table shape mismatch");
        for (const auto& c : cells_)
            if (c.e < 0 || c.rank < 0) throw Error("tower cell with negative invariants");
    }

    int n_max() const { return n_max_; }
    int m_max() const { return m_max_; }
    const std::vector<TowerCell>& cells() const { return cells_; }

    const TowerCell& at(int n, int m) const {
        if (n < 0 || n > n_max_ || m < 0 || m > m_max_)
            throw Error("tower cell outside the computed grid");
        return cells_[static_cast<size_t>(n) * (m_max_ + 1) + m];
    }

    std::vector<TowerCell> diagonal() const {
        std::vector<TowerCell> out;
        for (int n = 0; n <= std::min(n_max_, m_max_); ++n) out.push_back(at(n, n));
        return out;
    }

private:
    int n_max_;
    int m_max_;
    std::vector<TowerCell> cells_;
};

// Full (n, m) grid, cells computed independently by a work pool; the
// assembly is a fixed-order reduction so the result is schedule-independent.
inline TowerTable tower_sweep(const SemidirectModule& x, int n_max, int m_max,
                              int jobs = 0) {
    if (n_max < 0 || m_max < 0) throw Error("sweep ranges must be nonnegative");
    const int total = (n_max + 1) * (m_max + 1);
    std::vector<TowerCell> cells(static_cast<size_t>(total));
    detail::for_each_cell(total, jobs, [&](int idx) {
        const int n = idx / (m_max + 1);
        const int m = idx % (m_max + 1);
        FiniteZpModule s = g_coinvariants(x, n, m);
        cells[static_cast<size_t>(idx)] =
            TowerCell{n, m, s.e(), static_cast<long long>(s.rank()), s.certified};
    });
    return TowerTable(n_max, m_max, std::move(cells));
}

// ---------------------------------------------------------------------------
// Gamma-quotient growth along m.

struct GammaQuotientReport {
    int n = 0;
    long long mu_emp = 0;    // leading p^{rm} coefficient, rounded at the top level
    long long rank_emp = 0;  // coefficient of m p^{(r-1)m}, rounded at the top level
    std::vector<LevelRecord> records;
    std::vector<double> residuals;  // (e - mu p^{rm} - rank m p^{(r-1)m}) / p^{(r-1)m}
    bool pass = false;
};

// For fixed n, the image of (gamma^{p^n} - 1)X inside X_{H_m} is closed up
// to the full Lambda[gamma]-submodule it generates (saturation under the
// variable multiplications and the gamma operator); the report tracks the
// quotient's exponent across m and extracts the two leading coefficients of
// the growth law e = mu p^{rm} + rank m p^{(r-1)m} + O(p^{(r-1)m}).
inline GammaQuotientReport x_gamma_quotient_levels(const SemidirectModule& x, int n,
                                                   int m_lo, int m_hi) {
    if (n < 0 || m_lo < 0 || m_hi < m_lo) throw Error("bad gamma-quotient range");
    const PAdicContext& ctx = x.ctx();
    const int r = x.base().r();
    const int b = x.base().b();
    const u64 pn = detail::p_power_u64(ctx, n);

    const int count = m_hi - m_lo + 1;
    std::vector<FiniteZpModule> quotients(static_cast<size_t>(count),
                                          FiniteZpModule{{}, 0, true});
    detail::for_each_level(m_lo, m_hi, [&](int m, int i) {
        ZpMatrix gamma = gamma_on_coinvariants(x, m);
        const int dim_total = gamma.rows();
        HowellSpan span(ctx, dim_total);
        ZpMatrix rel = x.base().relations().expand(m);
        for (int j = 0; j < rel.cols(); ++j) span.insert(detail::column_of(rel, j));
        ZpMatrix descent = gamma.power(pn) - ZpMatrix::identity(ctx, dim_total);
        for (int j = 0; j < dim_total; ++j) span.insert(detail::column_of(descent, j));

        std::vector<ZpMatrix> ops;
        for (int v = 0; v < r; ++v) {
            LambdaMatrix tdiag(ctx, r, b, b);
            for (int k = 0; k < b; ++k) tdiag.at(k, k) = LambdaElement::variable(ctx, r, v);
            ops.push_back(tdiag.expand(m));
        }
        ops.push_back(gamma);

        const long long cap =
            static_cast<long long>(dim_total) * (ctx.precision() + 1) + 4;
        for (long long sweep = 0;; ++sweep) {
            if (sweep > cap)
                throw SaturationDiverged("submodule closure did not stabilize");
            bool grew = false;
            ZpMatrix basis = span.basis_matrix();
            for (const auto& op : ops)
                for (int j = 0; j < basis.cols(); ++j)
                    if (span.insert(detail::mat_vec(op, detail::column_of(basis, j))))
                        grew = true;
            if (!grew) break;
        }
        quotients[static_cast<size_t>(i)] = span.quotient_structure();
    });

    GammaQuotientReport rep;
    rep.n = n;
    const double p = static_cast<double>(ctx.p());
    const long long e_top = quotients.back().e();
    rep.mu_emp = std::llround(static_cast<double>(e_top) / std::pow(p, r * m_hi));
    if (m_hi >= 1)
        rep.rank_emp = std::llround(
            (static_cast<double>(e_top) -
             static_cast<double>(rep.mu_emp) * std::pow(p, r * m_hi)) /
            (m_hi * std::pow(p, (r - 1) * m_hi)));
    for (int i = 0; i < count; ++i) {
        const int m = m_lo + i;
        const auto& q = quotients[static_cast<size_t>(i)];
        rep.records.push_back(
            LevelRecord{m, q.e(), static_cast<long long>(q.rank()), q.certified});
        const double scale = std::pow(p, (r - 1) * m);
        rep.residuals.push_back(
            (static_cast<double>(q.e()) -
             static_cast<double>(rep.mu_emp) * std::pow(p, r * m) -
             static_cast<double>(rep.rank_emp) * m * scale) /
            scale);
    }
    rep.pass = detail::residuals_bounded(rep.residuals);
    return rep;
}

// ---------------------------------------------------------------------------
// Diagonal growth fit.

struct GrowthFit {
    int rank = 0;  // rank_Lambda of the base module
    bool rank_certified = false;
    std::vector<TowerCell> diagonal;
    std::vector<double> residuals;  // (e_{n,n} - rank n p^{rn}) / p^{rn}
    bool pass = false;
    // Torsion regimes, populated when rank == 0:
    std::vector<double> beta_ratios;     // e_{n,n} / p^{rn}
    std::vector<double> torsion_ratios;  // e_{n,n} / (n p^{(r-1)n}), n >= 1, when mu = 0
};

inline GrowthFit diagonal_fit(const SemidirectModule& x, int n_max) {
    if (n_max < 0) throw Error("diagonal range must be nonnegative");
    GrowthFit fit;
    LambdaRank lr = lambda_rank(x.base());
    fit.rank = lr.rank;
    fit.rank_certified = lr.certified;

    const int r = x.base().r();
    const double p = static_cast<double>(x.ctx().p());
    fit.diagonal.resize(static_cast<size_t>(n_max) + 1);
    detail::for_each_cell(n_max + 1, 0, [&](int n) {
        FiniteZpModule s = g_coinvariants(x, n, n);
        fit.diagonal[static_cast<size_t>(n)] =
            TowerCell{n, n, s.e(), static_cast<long long>(s.rank()), s.certified};
    });

    for (int n = 0; n <= n_max; ++n) {
        const double scale = std::pow(p, r * n);
        const double e = static_cast<double>(fit.diagonal[static_cast<size_t>(n)].e);
        fit.residuals.push_back((e - fit.rank * n * scale) / scale);
        if (fit.rank == 0) fit.beta_ratios.push_back(e / scale);
    }
    fit.pass = detail::residuals_bounded(fit.residuals);

    if (fit.rank == 0) {
        std::optional<long long> mu = mu_exact(x.base());
        if (mu && *mu == 0)
            for (int n = 1; n <= n_max; ++n)
                fit.torsion_ratios.push_back(
                    static_cast<double>(fit.diagonal[static_cast<size_t>(n)].e) /
                    (n * std::pow(p, (r - 1) * n)));
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Rank bound for structure quotients across the grid.

struct LeiBoundRow {
    int n = 0;
    int m = 0;
    long long rank = 0;
    bool certified = true;
};

struct LeiBoundReport {
    std::vector<LeiBoundRow> rows;
    double c = 0.0;  // smallest C with rank <= C p^{(r-1)m} on the window
};

// Zp-rank of X / (A_m(S, X) + (gamma^{p^n} - 1)X) across the grid: the
// structure's alpha-translates model the inertia-generated submodule at
// level m, the gamma part the n-descent.  C is reported, not judged: the
// degenerate cases (empty S) legitimately need C growing with the window.
inline LeiBoundReport lei_rank_bound_check(const SemidirectModule& x, const CMStructure& s,
                                           int n_lo, int n_hi, int m_lo, int m_hi) {
    if (n_lo < 0 || n_hi < n_lo || m_lo < 0 || m_hi < m_lo)
        throw Error("bad rank-bound grid");
    if (m_lo < s.m0) throw LevelBelowBase("rank-bound window below the structure base level");
    const PAdicContext& ctx = x.ctx();
    const ModulePresentation& base = x.base();
    const int r = base.r();
    const int b = base.b();

    int extra = 0;
    for (const auto& pair : s.pairs) {
        if (pair.generators.rows() != b)
            throw DimensionMismatch("structure generators do not match the module");
        if (pair.generators.r() != r)
            throw DimensionMismatch("structure generators over a different ring");
        extra += pair.generators.cols();
    }

    const int n_count = n_hi - n_lo + 1;
    const int m_count = m_hi - m_lo + 1;
    LeiBoundReport rep;
    rep.rows.resize(static_cast<size_t>(n_count) * static_cast<size_t>(m_count));
    detail::for_each_cell(n_count * m_count, 0, [&](int idx) {
        const int n = n_lo + idx / m_count;
        const int m = m_lo + idx % m_count;
        QuotientBasis qb(ctx, r, m);
        const int dim = static_cast<int>(qb.dim());
        if (static_cast<long long>(dim) * (base.a() + extra + b) > kExpandedMatrixCeiling ||
            static_cast<long long>(dim) * std::max(b, 1) > kExpandedMatrixCeiling)
            throw CeilingExceeded("rank-bound cell exceeds the configured ceiling");

        ZpMatrix gamma = gamma_on_coinvariants(x, m);
        ZpMatrix descent =
            gamma.power(detail::p_power_u64(ctx, n)) - ZpMatrix::identity(ctx, gamma.rows());
        ZpMatrix full(ctx, b * dim, (base.a() + extra) * dim + descent.cols());
        ZpMatrix rel = base.relations().expand(m);
        for (int i = 0; i < rel.rows(); ++i)
            for (int j = 0; j < rel.cols(); ++j) full.at(i, j) = rel.at(i, j);
        int col0 = base.a() * dim;
        for (const auto& pair : s.pairs) {
            LambdaElement alpha = alpha_element(ctx, pair.tau, m, s.m0);
            for (int g = 0; g < pair.generators.cols(); ++g) {
                for (int k = 0; k < b; ++k) {
                    LambdaElement entry = alpha * pair.generators.at(k, g);
                    if (entry.is_zero()) continue;
                    ZpMatrix blk = multiplication_matrix(entry, m);
                    for (int u = 0; u < dim; ++u)
                        for (int v = 0; v < dim; ++v)
                            full.at(k * dim + u, col0 + v) = blk.at(u, v);
                }
                col0 += dim;
            }
        }
        for (int i = 0; i < descent.rows(); ++i)
            for (int j = 0; j < descent.cols(); ++j) full.at(i, col0 + j) = descent.at(i, j);
        FiniteZpModule q = cokernel_structure(full);
        rep.rows[static_cast<size_t>(idx)] =
            LeiBoundRow{n, m, static_cast<long long>(q.rank()), q.certified};
    });

    const double p = static_cast<double>(ctx.p());
    for (const auto& row : rep.rows)
        rep.c = std::max(rep.c, static_cast<double>(row.rank) / std::pow(p, (r - 1) * row.m));
    return rep;
}

}  // namespace iwa
