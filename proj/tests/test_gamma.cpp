// Gamma-side tools: Weierstrass preparation, characteristic ideals of
// square presentations, Zp[[Gamma]]-module descent, the exact descent
// identity, and the Iwasawa formula fitter.  Oracles: direct scalar
// exponentiation, exact polynomial products of declared factorizations,
// and the module-theory coinvariants route.

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "iwa/errors.hpp"
#include "iwa/gamma.hpp"
#include "iwa/lambda.hpp"
#include "iwa/modules.hpp"
#include "iwa/padic.hpp"
#include "iwa/zp_matrix.hpp"

namespace {

using namespace iwa;

PAdicContext ctx3() { return PAdicContext(3, 12, 24, 2); }

LambdaElement T1(const PAdicContext& ctx) { return LambdaElement::variable(ctx, 1, 0); }
LambdaElement C1(const PAdicContext& ctx, long long c) {
    return LambdaElement::constant(ctx, 1, c);
}

long long ipow(long long b, int e) {
    long long out = 1;
    for (int i = 0; i < e; ++i) out *= b;
    return out;
}

int scalar_descent_valuation(const PAdicContext& ctx, int n) {
    u64 u = ctx.reduce_int(1 + static_cast<long long>(ctx.p()));
    u64 acc = ctx.pow(u, static_cast<u64>(ipow(ctx.p(), n)));
    return ctx.valuation(ctx.sub(acc, 1));
}

// Every coefficient of a - b up to the degree cap vanishes at certified
// precision.
bool congruent_below(const LambdaElement& a, const LambdaElement& b, int degree_cap) {
    LambdaElement diff = a - b;
    const PAdicContext& ctx = a.ctx();
    for (const auto& [exps, c] : diff.terms()) {
        if (exps[0] > degree_cap) continue;
        if (ctx.valuation(c) < ctx.certified_threshold()) return false;
    }
    return true;
}

LambdaElement random_poly_1var(std::mt19937_64& rng, const PAdicContext& ctx, int max_deg) {
    LambdaElement f(ctx, 1);
    for (int d = 0; d <= max_deg; ++d) {
        const long long c = static_cast<long long>(rng() % 19) - 9;
        if (c != 0) f = f + LambdaElement::monomial(ctx, {d}, ctx.reduce_int(c));
    }
    // Pin a low-valuation coefficient so the input is certified nonzero.
    if (f.is_zero() || f.p_content() >= 1)
        f = f + LambdaElement::monomial(ctx, {static_cast<int>(rng() % (max_deg + 1))}, 1);
    return f;
}

ZpMatrix matrix_from(const PAdicContext& ctx, int n,
                     const std::vector<std::vector<long long>>& rows) {
    ZpMatrix m(ctx, n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m.set_int(i, j, rows[static_cast<size_t>(i)][static_cast<size_t>(j)]);
    return m;
}

}  // namespace

TEST_CASE("weierstrass preparation factors at certified precision", "[gamma]") {
    PAdicContext ctx = ctx3();

    SECTION("pure p-power") {
        WeierstrassData w = weierstrass_prepare(C1(ctx, 27), 0);
        REQUIRE(w.mu == 3);
        REQUIRE(w.lambda == 0);
        REQUIRE(w.distinguished == C1(ctx, 1));
        REQUIRE(w.unit_part == C1(ctx, 1));
    }

    SECTION("an already distinguished polynomial is returned unchanged") {
        LambdaElement f = T1(ctx) * T1(ctx) + C1(ctx, 3);
        WeierstrassData w = weierstrass_prepare(f, 2);
        REQUIRE(w.mu == 0);
        REQUIRE(w.lambda == 2);
        REQUIRE(congruent_below(w.distinguished, f, 2));
        REQUIRE(congruent_below(w.unit_part, C1(ctx, 1), 2));
    }

    SECTION("declared factorizations are recovered") {
        std::mt19937_64 rng(2024);
        for (int trial = 0; trial < 10; ++trial) {
            LambdaElement u(ctx, 1);
            for (int d = 1; d <= 3; ++d)
                u = u + LambdaElement::monomial(ctx, {d},
                                                ctx.reduce_int(static_cast<long long>(rng() % 7) - 3));
            LambdaElement unit = C1(ctx, 1) + u;  // 1 + T * (...)
            LambdaElement f = (T1(ctx) - C1(ctx, 3)) * unit;
            const int cap = f.degree_in(0);
            WeierstrassData w = weierstrass_prepare(f, cap);
            REQUIRE(w.mu == 0);
            REQUIRE(w.lambda == 1);
            // Residual of the recovered factorization vanishes mod p^{N-guard}.
            LambdaElement recovered =
                w.distinguished * w.unit_part;
            REQUIRE(congruent_below(recovered, f, cap));
            REQUIRE(congruent_below(w.distinguished, T1(ctx) - C1(ctx, 3), cap));
        }
    }

    SECTION("mu and lambda are additive on products") {
        std::mt19937_64 rng(77);
        for (int trial = 0; trial < 20; ++trial) {
            LambdaElement f = random_poly_1var(rng, ctx, 3).scaled(
                ctx.p_power(rng() % 3));
            LambdaElement g = random_poly_1var(rng, ctx, 2).scaled(
                ctx.p_power(rng() % 2));
            LambdaElement fg = f * g;
            WeierstrassData wf = weierstrass_prepare(f, f.degree_in(0));
            WeierstrassData wg = weierstrass_prepare(g, g.degree_in(0));
            WeierstrassData wfg = weierstrass_prepare(fg, fg.degree_in(0));
            REQUIRE(wfg.mu == wf.mu + wg.mu);
            REQUIRE(wfg.lambda == wf.lambda + wg.lambda);
        }
    }

    SECTION("distinguished parts have their lower coefficients in (p)") {
        LambdaElement f = (T1(ctx) - C1(ctx, 3)) * (T1(ctx) + C1(ctx, 1 + 9));
        WeierstrassData w = weierstrass_prepare(f, 2);
        REQUIRE(w.lambda == 1);
        for (const auto& [exps, c] : w.distinguished.terms())
            if (exps[0] < w.lambda) REQUIRE(ctx.valuation(c) >= 1);
    }

    SECTION("uncertifiable inputs are refused") {
        REQUIRE_THROWS_AS(weierstrass_prepare(LambdaElement(ctx, 1), 0),
                          PrecisionExhausted);
        REQUIRE_THROWS_AS(weierstrass_prepare(C1(ctx, 177147), 0),  // p^11
                          PrecisionExhausted);
        REQUIRE_THROWS_AS(weierstrass_prepare(T1(ctx) * T1(ctx), 1), Error);
        REQUIRE_THROWS_AS(
            weierstrass_prepare(LambdaElement::variable(ctx, 2, 0), 1),
            DimensionMismatch);
    }
}

TEST_CASE("characteristic ideals come from square determinants", "[gamma]") {
    PAdicContext ctx = ctx3();

    SECTION("diagonal and identity presentations") {
        LambdaMatrix a(ctx, 1, 2, 2);
        a.at(0, 0) = T1(ctx) - C1(ctx, 3);
        a.at(1, 1) = C1(ctx, 3);
        LambdaElement det = char_ideal_square(a);
        REQUIRE(det == (T1(ctx) - C1(ctx, 3)) * C1(ctx, 3));

        REQUIRE(char_ideal_square(LambdaMatrix::identity(ctx, 1, 3)) == C1(ctx, 1));
    }

    SECTION("unimodular changes of basis preserve mu and lambda") {
        LambdaMatrix a(ctx, 1, 3, 3);
        a.at(0, 0) = T1(ctx) - C1(ctx, 3);
        a.at(1, 1) = C1(ctx, 3);
        a.at(2, 2) = T1(ctx) * T1(ctx) + C1(ctx, 3);
        WeierstrassData base = weierstrass_prepare(char_ideal_square(a), 3);
        REQUIRE(base.mu == 1);
        REQUIRE(base.lambda == 3);

        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 5; ++trial) {
            LambdaMatrix u = LambdaMatrix::identity(ctx, 1, 3);
            LambdaMatrix v = LambdaMatrix::identity(ctx, 1, 3);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    if (i > j)
                        u.at(i, j) = LambdaElement::monomial(
                            ctx, {static_cast<int>(rng() % 2)},
                            ctx.reduce_int(static_cast<long long>(rng() % 5) - 2));
                    if (i < j)
                        v.at(i, j) = LambdaElement::monomial(
                            ctx, {static_cast<int>(rng() % 2)},
                            ctx.reduce_int(static_cast<long long>(rng() % 5) - 2));
                }
            LambdaElement det = char_ideal_square(u * a * v);
            WeierstrassData w = weierstrass_prepare(det, det.degree_in(0));
            REQUIRE(w.mu == base.mu);
            REQUIRE(w.lambda == base.lambda);
        }
    }

    SECTION("singular or ill-shaped presentations are refused") {
        LambdaMatrix degenerate(ctx, 1, 2, 2);
        degenerate.at(0, 0) = T1(ctx);
        degenerate.at(0, 1) = T1(ctx);
        degenerate.at(1, 0) = T1(ctx);
        degenerate.at(1, 1) = T1(ctx);
        REQUIRE_THROWS_AS(char_ideal_square(degenerate), SingularPresentation);

        LambdaMatrix deep(ctx, 1, 1, 1);
        deep.at(0, 0) = C1(ctx, 177147);  // p^11, below certified precision
        REQUIRE_THROWS_AS(char_ideal_square(deep), SingularPresentation);

        REQUIRE_THROWS_AS(char_ideal_square(LambdaMatrix(ctx, 1, 2, 3)),
                          DimensionMismatch);
        REQUIRE_THROWS_AS(char_ideal_square(LambdaMatrix(ctx, 2, 2, 2)),
                          DimensionMismatch);
    }
}

TEST_CASE("gamma modules descend through the levels", "[gamma]") {
    PAdicContext ctx = ctx3();

    SECTION("trivial action leaves infinite coinvariants") {
        ZpGammaModule m(1, {}, ZpMatrix::identity(ctx, 1));
        for (int n = 0; n <= 2; ++n) {
            FiniteZpModule co = gamma_coinvariants(m, n);
            REQUIRE(co.rank() == 1);
            REQUIRE(co.e() == 0);
        }
    }

    SECTION("scalar 1 + p matches direct exponentiation") {
        ZpGammaModule m(1, {}, matrix_from(ctx, 1, {{4}}));
        for (int n = 0; n <= 3; ++n) {
            FiniteZpModule co = gamma_coinvariants(m, n);
            REQUIRE(co.rank() == 0);
            REQUIRE(co.e() == scalar_descent_valuation(ctx, n));
            REQUIRE(co.e() == n + 1);
        }
    }

    SECTION("the companion model of T^2 + p matches the module route") {
        // Multiplication by 1 + T on Lambda_1/(T^2 + p) in the basis {1, T}.
        ZpGammaModule m(2, {}, matrix_from(ctx, 2, {{1, -3}, {1, 1}}));
        ModulePresentation module_route =
            ModulePresentation::cyclic(T1(ctx) * T1(ctx) + C1(ctx, 3));
        const long long expected[4] = {1, 4, 6, 8};
        for (int n = 0; n <= 3; ++n) {
            FiniteZpModule via_gamma = gamma_coinvariants(m, n);
            FiniteZpModule via_module = coinvariants(module_route, n);
            REQUIRE(via_gamma.e() == via_module.e());
            REQUIRE(via_gamma.rank() == via_module.rank());
            REQUIRE(via_gamma.e() == expected[n]);
        }
    }

    SECTION("the squared-factor model matches the module route") {
        // Multiplication by 1 + T on Lambda_1/((T - p)^2) in {1, T - p}.
        ZpGammaModule m(2, {}, matrix_from(ctx, 2, {{4, 0}, {1, 4}}));
        ModulePresentation module_route =
            ModulePresentation::cyclic(T1(ctx) - C1(ctx, 3), 2);
        for (int n = 0; n <= 3; ++n) {
            FiniteZpModule via_gamma = gamma_coinvariants(m, n);
            FiniteZpModule via_module = coinvariants(module_route, n);
            REQUIRE(via_gamma.e() == via_module.e());
            REQUIRE(via_gamma.rank() == via_module.rank());
        }
    }

    SECTION("torsion relations join the descent matrix") {
        ZpGammaModule mixed(1, {1}, matrix_from(ctx, 2, {{4, 0}, {0, 1}}));
        for (int n = 0; n <= 3; ++n)
            REQUIRE(gamma_coinvariants(mixed, n).e() == n + 2);

        ZpGammaModule finite(0, {2, 1}, ZpMatrix::identity(ctx, 2));
        for (int n = 0; n <= 2; ++n) {
            FiniteZpModule co = gamma_coinvariants(finite, n);
            REQUIRE(co.e() == 3);
            REQUIRE(co.rank() == 0);
        }
    }

    SECTION("constructor validation") {
        REQUIRE_THROWS_AS(ZpGammaModule(2, {}, ZpMatrix::identity(ctx, 1)),
                          DimensionMismatch);
        REQUIRE_THROWS_AS(ZpGammaModule(1, {1}, matrix_from(ctx, 2, {{1, 1}, {0, 1}})),
                          Error);  // torsion leaking into the lattice
        REQUIRE_THROWS_AS(ZpGammaModule(1, {}, matrix_from(ctx, 1, {{2}})),
                          HypothesisFailed);  // not unipotent mod p
        REQUIRE_THROWS_AS(ZpGammaModule(0, {0}, ZpMatrix::identity(ctx, 1)), Error);
        REQUIRE_THROWS_AS(ZpGammaModule(0, {10}, ZpMatrix::identity(ctx, 1)), Error);
    }
}

TEST_CASE("the descent identity holds exactly", "[gamma]") {
    PAdicContext ctx = ctx3();

    SECTION("rank one scalar module") {
        ZpGammaModule m(1, {}, matrix_from(ctx, 1, {{4}}));
        GammaDescentReport rep = gamma_estimate_check(m, 0, 4);
        REQUIRE(rep.n0 == 1);
        REQUIRE(rep.rank == 1);
        REQUIRE(rep.pass);
        for (const auto& line : rep.lines) {
            REQUIRE(line.e_total == line.n + 1);
            if (line.n >= 1) {
                REQUIRE(line.lhs == line.n - 1);
                REQUIRE(line.rhs == line.n - 1);
            }
        }
    }

    SECTION("rank two with a quadratic characteristic ideal") {
        ZpGammaModule m(2, {}, matrix_from(ctx, 2, {{1, -3}, {1, 1}}));
        GammaDescentReport rep = gamma_estimate_check(m, 0, 4);
        REQUIRE(rep.n0 == 2);  // lambda = 2 forces p^{n0-1}(p-1) > 2
        REQUIRE(rep.rank == 2);
        REQUIRE(rep.pass);
        for (const auto& line : rep.lines)
            if (line.n >= 2) REQUIRE(line.lhs == 2 * (line.n - 2));
    }

    SECTION("split rank two") {
        ZpGammaModule m(2, {}, matrix_from(ctx, 2, {{4, 0}, {0, 16}}));
        GammaDescentReport rep = gamma_estimate_check(m, 0, 4);
        REQUIRE(rep.n0 == 2);
        REQUIRE(rep.pass);
        for (const auto& line : rep.lines) REQUIRE(line.e_total == 2 * line.n + 2);
    }

    SECTION("mixed free and torsion parts") {
        ZpGammaModule m(1, {1}, matrix_from(ctx, 2, {{4, 0}, {0, 1}}));
        GammaDescentReport rep = gamma_estimate_check(m, 0, 4);
        REQUIRE(rep.n0 == 1);
        REQUIRE(rep.pass);
        for (const auto& line : rep.lines) {
            REQUIRE(line.e_torsion == 1);
            if (line.n >= 1) REQUIRE(line.lhs == line.n - 1);
        }
    }

    SECTION("finite modules balance trivially") {
        ZpGammaModule m(0, {2, 1}, ZpMatrix::identity(ctx, 2));
        GammaDescentReport rep = gamma_estimate_check(m, 0, 3);
        REQUIRE(rep.n0 == 0);
        REQUIRE(rep.rank == 0);
        REQUIRE(rep.pass);
        for (const auto& line : rep.lines) {
            REQUIRE(line.lhs == 0);
            REQUIRE(line.rhs == 0);
        }
    }

    SECTION("infinite coinvariants fail the hypothesis") {
        ZpGammaModule m(1, {}, ZpMatrix::identity(ctx, 1));
        REQUIRE_THROWS_AS(gamma_estimate_check(m, 0, 2), HypothesisFailed);
        ZpGammaModule ok(1, {}, matrix_from(ctx, 1, {{4}}));
        REQUIRE_THROWS_AS(gamma_estimate_check(ok, 2, 1), Error);
    }
}

TEST_CASE("iwasawa fit recovers planted formulas", "[gamma]") {
    PAdicContext ctx = ctx3();

    SECTION("pure linear growth") {
        IwasawaFit fit = iwasawa_fit({1, 2, 3, 4, 5}, 3);
        REQUIRE(fit.exact);
        REQUIRE(fit.mu == 0);
        REQUIRE(fit.lambda == 1);
        REQUIRE(fit.nu == 1);
        REQUIRE(fit.n_stable == 0);
    }

    SECTION("mixed mu and lambda growth") {
        std::vector<long long> e;
        for (int n = 0; n <= 4; ++n) e.push_back(2 * ipow(3, n) + n);
        IwasawaFit fit = iwasawa_fit(e, 3);
        REQUIRE(fit.exact);
        REQUIRE(fit.mu == 2);
        REQUIRE(fit.lambda == 1);
        REQUIRE(fit.nu == 0);
        REQUIRE(fit.n_stable == 0);
    }

    SECTION("the coinvariant sequence of Lambda_1/(p(T - p))") {
        LambdaElement f = (T1(ctx) - C1(ctx, 3)).scaled(3);
        ModulePresentation m = ModulePresentation::cyclic(f);
        std::vector<long long> e;
        const long long expected[5] = {2, 5, 12, 31, 86};  // p^m + m + 1
        for (int level = 0; level <= 4; ++level) {
            e.push_back(coinvariants(m, level).e());
            REQUIRE(e.back() == expected[level]);
        }
        IwasawaFit fit = iwasawa_fit(e, 3);
        REQUIRE(fit.exact);
        REQUIRE(fit.mu == 1);
        REQUIRE(fit.lambda == 1);
        REQUIRE(fit.nu == 1);
        // Cross-checks: the exact mu rule and the Weierstrass degree.
        REQUIRE(mu_exact(m).value() == fit.mu);
        WeierstrassData w = weierstrass_prepare(f, 1);
        REQUIRE(w.mu == fit.mu);
        REQUIRE(w.lambda == fit.lambda);
    }

    SECTION("perturbed prefixes are stepped over") {
        std::vector<long long> e;
        for (int n = 0; n <= 5; ++n) e.push_back(ipow(3, n) + 2 * n - 1);
        e[0] += 5;
        e[1] -= 1;
        IwasawaFit fit = iwasawa_fit(e, 3);
        REQUIRE(fit.exact);
        REQUIRE(fit.mu == 1);
        REQUIRE(fit.lambda == 2);
        REQUIRE(fit.nu == -1);
        REQUIRE(fit.n_stable == 2);
    }

    SECTION("sequences without a formula tail report inexact") {
        IwasawaFit fit = iwasawa_fit({0, 1, 1, 2, 1}, 3);
        REQUIRE_FALSE(fit.exact);
    }

    SECTION("short sequences are refused") {
        REQUIRE_THROWS_AS(iwasawa_fit({1, 2, 3}, 3), SequenceTooShort);
    }
}
