// iwasawa: exact invariants of finitely generated modules over the
// r-variable power-series ring, with tower sweeps and growth-law checks.
//
// Subcommands: compute, sweep, fit, verify, demo.  See docs/formats.md for
// the document and output formats and the exit-code contract.

#include <optional>
#include <string>

#include <CLI11.hpp>

#include "iwa/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"exact invariants of power-series modules and their towers"};
    app.require_subcommand(1);
    app.fallthrough();

    iwa::RunConfig cfg;
    int precision = 0;
    int n_max = -1;
    int m_max = -1;

    app.add_option("-i,--input", cfg.input, "spec document to load");
    app.add_option("-o,--out", cfg.out_dir,
                   "output directory (default: $IWASAWA_OUT, then .)");
    app.add_option("--precision", precision,
                   "working precision override (p-adic digits)");
    app.add_option("-j,--jobs", cfg.jobs, "worker threads (0 = hardware)");
    app.add_option("--ceiling", cfg.ceiling, "largest allowed expanded matrix size");
    app.add_option("--law", cfg.law, "estimate law for compute/verify");
    app.add_option("--n-max", n_max, "override the document's n range");
    app.add_option("--m-max", m_max, "override the document's m range (window top)");

    app.add_subcommand("compute", "run one estimate law and write records + summary");
    app.add_subcommand("sweep", "compute the (n, m) exponent table of a tower");
    app.add_subcommand("fit", "fit the growth law of a module or tower");
    app.add_subcommand("verify", "run one estimate law and gate on its pass flag");
    app.add_subcommand("demo", "run the built-in fixture corpus");

    CLI11_PARSE(app, argc, argv);

    cfg.command = app.get_subcommands().at(0)->get_name();
    if (precision > 0) cfg.precision = precision;
    if (n_max >= 0) cfg.n_max = n_max;
    if (m_max >= 0) cfg.m_max = m_max;
    return iwa::run(cfg);
}
