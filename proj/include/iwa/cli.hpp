#pragma once
// Command-line front end: dispatches the compute / sweep / fit / verify /
// demo commands over parsed spec documents and emits CSV tables and SVG
// plots.  All output formats are exact and deterministic: the same document
// and ranges produce byte-identical files at any parallelism degree.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "iwa/errors.hpp"
#include "iwa/gamma.hpp"
#include "iwa/modules.hpp"
#include "iwa/specdoc.hpp"
#include "iwa/tower.hpp"

namespace iwa {

struct RunConfig {
    std::string command;  // compute | sweep | fit | verify | demo
    std::string input;    // spec document path (unused by demo)
    std::string out_dir;  // empty: $IWASAWA_OUT, falling back to "."
    std::optional<int> precision;
    int jobs = 0;  // 0 = one worker per hardware thread
    long long ceiling = kExpandedMatrixCeiling;
    std::string law = "general";  // compute / verify
    std::optional<int> n_max;     // sweep / fit range overrides
    std::optional<int> m_max;
    std::ostream* log = nullptr;  // defaults to std::cout
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitParse = 2;
inline constexpr int kExitPrecision = 3;
inline constexpr int kExitVerify = 4;

// ---------------------------------------------------------------------------
// Emitters.  CSV uses LF line endings, a header row, and no padding; the
// byte-exact layout is documented in docs/formats.md.

inline std::string tower_csv(const TowerTable& table) {
    std::string out = "n,m,e,rank,certified\n";
    for (int n = 0; n <= table.n_max(); ++n)
        for (int m = 0; m <= table.m_max(); ++m) {
            const TowerCell& c = table.at(n, m);
            out += std::to_string(c.n) + "," + std::to_string(c.m) + "," +
                   std::to_string(c.e) + "," + std::to_string(c.rank) + "," +
                   (c.certified ? "1" : "0") + "\n";
        }
    return out;
}

inline std::string records_csv(const std::vector<LevelRecord>& records) {
    std::string out = "m,e,rank,certified\n";
    for (const LevelRecord& rec : records)
        out += std::to_string(rec.m) + "," + std::to_string(rec.e) + "," +
               std::to_string(rec.rank) + "," + (rec.certified ? "1" : "0") + "\n";
    return out;
}

namespace detail {

inline std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace detail

// Static log-scale plot of the diagonal e_{n,n}: n on the x axis, log10(e)
// on the y axis with decade gridlines; zero cells are drawn at the floor.
inline std::string diagonal_svg(const TowerTable& table) {
    const std::vector<TowerCell> diag = table.diagonal();
    const double width = 640, height = 400;
    const double left = 64, right = 620, top = 48, bottom = 352;

    double max_log = 1.0;
    for (const TowerCell& c : diag)
        max_log = std::max(max_log, std::log10(static_cast<double>(std::max(c.e, 1LL))));
    const int decades = static_cast<int>(std::ceil(max_log - 1e-9));
    const int steps = std::max(1, static_cast<int>(diag.size()) - 1);

    auto x_of = [&](int n) { return left + (right - left) * n / steps; };
    auto y_of = [&](long long e) {
        double lg = std::log10(static_cast<double>(std::max(e, 1LL)));
        return bottom - (bottom - top) * lg / std::max(1.0, static_cast<double>(decades));
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
        << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << detail::fixed2((left + right) / 2)
        << "\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" "
           "font-size=\"14\">diagonal growth e(n,n), log scale</text>\n";

    for (int d = 0; d <= decades; ++d) {
        double y = bottom - (bottom - top) * d / std::max(1, decades);
        svg << "<line x1=\"" << detail::fixed2(left) << "\" y1=\"" << detail::fixed2(y)
            << "\" x2=\"" << detail::fixed2(right) << "\" y2=\"" << detail::fixed2(y)
            << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << detail::fixed2(left - 8) << "\" y=\""
            << detail::fixed2(y + 4)
            << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"12\">1e"
            << d << "</text>\n";
    }
    for (size_t n = 0; n < diag.size(); ++n) {
        double x = x_of(static_cast<int>(n));
        svg << "<line x1=\"" << detail::fixed2(x) << "\" y1=\"" << detail::fixed2(bottom)
            << "\" x2=\"" << detail::fixed2(x) << "\" y2=\"" << detail::fixed2(bottom + 6)
            << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << detail::fixed2(x) << "\" y=\"" << detail::fixed2(bottom + 22)
            << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">"
            << n << "</text>\n";
    }
    svg << "<text x=\"" << detail::fixed2((left + right) / 2) << "\" y=\""
        << detail::fixed2(height - 12)
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">"
           "n (diagonal level)</text>\n";
    svg << "<line x1=\"" << detail::fixed2(left) << "\" y1=\"" << detail::fixed2(top)
        << "\" x2=\"" << detail::fixed2(left) << "\" y2=\"" << detail::fixed2(bottom)
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << detail::fixed2(left) << "\" y1=\"" << detail::fixed2(bottom)
        << "\" x2=\"" << detail::fixed2(right) << "\" y2=\"" << detail::fixed2(bottom)
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";

    svg << "<polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\" points=\"";
    for (size_t n = 0; n < diag.size(); ++n) {
        if (n) svg << " ";
        svg << detail::fixed2(x_of(static_cast<int>(n))) << ","
            << detail::fixed2(y_of(diag[n].e));
    }
    svg << "\"/>\n";
    for (size_t n = 0; n < diag.size(); ++n)
        svg << "<circle cx=\"" << detail::fixed2(x_of(static_cast<int>(n))) << "\" cy=\""
            << detail::fixed2(y_of(diag[n].e)) << "\" r=\"3\" fill=\"#1f5fbf\"/>\n";
    svg << "</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// Command plumbing.

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("short write to " + path.string());
}

inline std::filesystem::path resolve_out_dir(const RunConfig& cfg) {
    std::string dir = cfg.out_dir;
    if (dir.empty()) {
        const char* env = std::getenv("IWASAWA_OUT");
        dir = env && *env ? env : ".";
    }
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string input_stem(const RunConfig& cfg) {
    std::string stem = std::filesystem::path(cfg.input).stem().string();
    return stem.empty() ? "run" : stem;
}

// Pre-flight estimate of the largest expanded matrix a command will build,
// checked against the configured ceiling before any work happens.
inline void check_ceiling(const RunConfig& cfg, const SpecDocument& doc, int deepest) {
    long long dim = 1;
    for (int k = 0; k < doc.module.r() * deepest; ++k) {
        dim *= static_cast<long long>(doc.ctx.p());
        if (dim > cfg.ceiling) break;
    }
    const long long width =
        static_cast<long long>(doc.module.a() + doc.module.b() + 1);
    if (dim * std::max<long long>(doc.module.b(), 1) > cfg.ceiling ||
        dim * width > cfg.ceiling)
        throw CeilingExceeded("level " + std::to_string(deepest) +
                              " needs matrices beyond the configured ceiling");
}

inline std::string fit_summary(const IwasawaFit& fit, const std::vector<long long>& e) {
    std::ostringstream out;
    out << "kind: module e-sequence fit\n";
    out << "levels:";
    for (long long v : e) out << " " << v;
    out << "\n";
    out << "mu: " << fit.mu << "\nlambda: " << fit.lambda << "\nnu: " << fit.nu << "\n";
    out << "stable_from: " << fit.n_stable << "\n";
    out << "exact: " << (fit.exact ? "yes" : "no") << "\n";
    return out.str();
}

inline std::string growth_summary(const GrowthFit& fit) {
    std::ostringstream out;
    out << "kind: tower diagonal fit\n";
    out << "rank: " << fit.rank << (fit.rank_certified ? " (certified)" : " (uncertified)")
        << "\n";
    out << "diagonal e:";
    for (const TowerCell& c : fit.diagonal) out << " " << c.e;
    out << "\nresiduals:";
    for (double v : fit.residuals) out << " " << fixed2(v);
    out << "\npass: " << (fit.pass ? "yes" : "no") << "\n";
    if (!fit.beta_ratios.empty()) {
        out << "beta_ratios:";
        for (double v : fit.beta_ratios) out << " " << fixed2(v);
        out << "\n";
    }
    if (!fit.torsion_ratios.empty()) {
        out << "torsion_ratios:";
        for (double v : fit.torsion_ratios) out << " " << fixed2(v);
        out << "\n";
    }
    return out.str();
}

inline std::string report_summary(const InvariantReport& rep, int m_lo, int m_hi) {
    std::ostringstream out;
    out << "law: " << rep.law << "\n";
    out << "window: m = " << m_lo << ".." << m_hi << "\n";
    for (const LevelRecord& rec : rep.records)
        out << "  m=" << rec.m << " e=" << rec.e << " rank=" << rec.rank
            << " certified=" << (rec.certified ? "1" : "0") << "\n";
    out << "residuals:";
    for (double v : rep.residuals) out << " " << fixed2(v);
    out << "\nfitted_constant: " << fixed2(rep.fitted_constant) << "\n";
    out << "pass: " << (rep.pass ? "yes" : "no") << "\n";
    return out.str();
}

inline int cmd_compute(const RunConfig& cfg, const SpecDocument& doc, std::ostream& log,
                       bool gate) {
    if (doc.kind != "module")
        throw Error(cfg.command + " needs a module document, got kind " + doc.kind);
    const int m_hi = cfg.m_max.value_or(3);
    check_ceiling(cfg, doc, m_hi);
    InvariantReport rep = verify_estimate(doc.module, cfg.law, 0, m_hi);

    bool window_certified = true;
    for (const LevelRecord& rec : rep.records) window_certified &= rec.certified;

    if (!gate) {
        const std::filesystem::path dir = resolve_out_dir(cfg);
        const std::string stem = input_stem(cfg);
        write_file(dir / (stem + ".records.csv"), records_csv(rep.records));
        write_file(dir / (stem + ".summary.txt"), report_summary(rep, 0, m_hi));
        log << "compute: law " << rep.law << " on m = 0.." << m_hi << ": "
            << (rep.pass ? "pass" : "fail") << ", records in "
            << (dir / (stem + ".records.csv")).string() << "\n";
        return kExitOk;
    }

    if (!window_certified) {
        log << "verify: refused: window contains uncertified cells\n";
        return kExitVerify;
    }
    log << "verify: law " << rep.law << " on m = 0.." << m_hi << ": "
        << (rep.pass ? "pass" : "fail") << "\n";
    return rep.pass ? kExitOk : kExitVerify;
}

inline int cmd_sweep(const RunConfig& cfg, const SpecDocument& doc, std::ostream& log) {
    if (doc.kind != "tower")
        throw Error("sweep needs a tower document, got kind " + doc.kind);
    const int n_hi = cfg.n_max.value_or(doc.n_max);
    const int m_hi = cfg.m_max.value_or(doc.m_max);
    check_ceiling(cfg, doc, m_hi);
    SemidirectModule tower = doc.tower();
    TowerTable table = tower_sweep(tower, n_hi, m_hi, cfg.jobs);

    const std::filesystem::path dir = resolve_out_dir(cfg);
    const std::string stem = input_stem(cfg);
    write_file(dir / (stem + ".tower.csv"), tower_csv(table));
    write_file(dir / (stem + ".diagonal.svg"), diagonal_svg(table));
    log << "sweep: " << (n_hi + 1) * (m_hi + 1) << " cells (n <= " << n_hi
        << ", m <= " << m_hi << "), table in " << (dir / (stem + ".tower.csv")).string()
        << "\n";
    return kExitOk;
}

inline int cmd_fit(const RunConfig& cfg, const SpecDocument& doc, std::ostream& log) {
    const std::filesystem::path dir = resolve_out_dir(cfg);
    const std::string stem = input_stem(cfg);
    if (doc.kind == "tower") {
        const int n_hi = cfg.n_max.value_or(doc.n_max);
        check_ceiling(cfg, doc, n_hi);
        GrowthFit fit = diagonal_fit(doc.tower(), n_hi);
        write_file(dir / (stem + ".fit.txt"), growth_summary(fit));
        log << "fit: tower diagonal rank " << fit.rank << ", "
            << (fit.pass ? "residuals bounded" : "residuals unbounded") << ", summary in "
            << (dir / (stem + ".fit.txt")).string() << "\n";
        return kExitOk;
    }
    const int m_hi = cfg.m_max.value_or(4);
    check_ceiling(cfg, doc, m_hi);
    std::vector<long long> e(static_cast<size_t>(m_hi) + 1, 0);
    detail::for_each_level(0, m_hi, [&](int level, int i) {
        e[static_cast<size_t>(i)] = coinvariants(doc.module, level).e();
    });
    IwasawaFit fit = iwasawa_fit(e, static_cast<long long>(doc.ctx.p()));
    write_file(dir / (stem + ".fit.txt"), fit_summary(fit, e));
    log << "fit: mu=" << fit.mu << " lambda=" << fit.lambda << " nu=" << fit.nu
        << (fit.exact ? " (exact tail)" : " (least squares)") << ", summary in "
        << (dir / (stem + ".fit.txt")).string() << "\n";
    return kExitOk;
}

inline int cmd_demo(const RunConfig& cfg, std::ostream& log) {
    (void)cfg;
    bool all_pass = true;

    {
        PAdicContext ctx(3, 12, 24, 2);
        InvariantReport rep =
            verify_estimate(ModulePresentation::p_cyclic(ctx, 1, 2), "elementary", 0, 3);
        log << "demo: elementary law on Lambda_1/(p^2): "
            << (rep.pass ? "pass" : "fail") << "\n";
        all_pass &= rep.pass;
    }
    {
        std::vector<long long> e;
        for (int n = 0, pn = 1; n <= 4; ++n, pn *= 3)
            e.push_back(2LL * pn + n);
        IwasawaFit fit = iwasawa_fit(e, 3);
        log << "demo: fit of 2*3^n + n: mu=" << fit.mu << " lambda=" << fit.lambda
            << " nu=" << fit.nu << (fit.exact ? " (exact)" : "") << "\n";
        all_pass &= fit.mu == 2 && fit.lambda == 1 && fit.nu == 0;
    }
    {
        PAdicContext ctx(3, 12, 24, 2);
        ZpMatrix rho(ctx, 1, 1);
        rho.set_int(0, 0, 4);
        LambdaMatrix phi(ctx, 1, 1, 1);
        phi.at(0, 0) = LambdaElement::constant(ctx, 1, 4);
        SemidirectModule tower(ModulePresentation::free_module(ctx, 1, 1),
                               RingAutomorphism(rho), phi);
        TowerTable table = tower_sweep(tower, 2, 2, cfg.jobs);
        log << "demo: twisted free tower diagonal e:";
        for (const TowerCell& c : table.diagonal()) log << " " << c.e;
        log << "\n";
    }
    {
        PAdicContext ctx(3, 12, 24, 2);
        InvariantReport rep =
            verify_estimate(ModulePresentation::p_cyclic(ctx, 2, 1), "general", 0, 1);
        log << "demo: general law on Lambda_2/(p): " << (rep.pass ? "pass" : "fail")
            << "\n";
        all_pass &= rep.pass;
    }

    log << "demo: " << (all_pass ? "all fixtures pass" : "fixtures FAILED") << "\n";
    return all_pass ? kExitOk : kExitVerify;
}

}  // namespace detail

// Executes one command.  Exit codes: 0 success, 2 document parse error,
// 3 precision exhausted, 4 failed verification, 1 any other error.
inline int run(const RunConfig& cfg) {
    std::ostream& log = cfg.log ? *cfg.log : std::cout;
    try {
        if (cfg.ceiling <= 0) throw Error("ceiling must be positive");
        if (cfg.jobs < 0) throw Error("jobs must be nonnegative");
        if (cfg.command == "demo") return detail::cmd_demo(cfg, log);
        if (cfg.input.empty()) throw Error("missing input document");

        SpecDocument doc = load_spec_document(cfg.input, cfg.precision);
        if (cfg.command == "compute") return detail::cmd_compute(cfg, doc, log, false);
        if (cfg.command == "verify") return detail::cmd_compute(cfg, doc, log, true);
        if (cfg.command == "sweep") return detail::cmd_sweep(cfg, doc, log);
        if (cfg.command == "fit") return detail::cmd_fit(cfg, doc, log);
        throw Error("unknown command '" + cfg.command + "'");
    } catch (const ParseError& e) {
        log << "parse error: " << e.what() << "\n";
        return kExitParse;
    } catch (const PrecisionExhausted& e) {
        log << "precision exhausted: " << e.what() << "\n";
        return kExitPrecision;
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return kExitError;
    }
}

}  // namespace iwa
