#pragma once
// Parser for the versioned spec-document format consumed by the CLI: a
// strict line-oriented text format describing either a module presentation
// ("kind module") or a semidirect tower ("kind tower").  Unknown keys and
// sections are errors; every diagnostic carries a line and column.
//
// The exact grammar is documented in docs/formats.md.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "iwa/errors.hpp"
#include "iwa/lambda.hpp"
#include "iwa/modules.hpp"
#include "iwa/padic.hpp"
#include "iwa/parse.hpp"
#include "iwa/tower.hpp"

namespace iwa {

// A parsed document.  kind is "module" or "tower"; rho/phi/sweep ranges are
// populated only for towers.
struct SpecDocument {
    int schema_version;
    std::string kind;
    PAdicContext ctx;
    ModulePresentation module;
    std::optional<RingAutomorphism> rho;
    std::optional<LambdaMatrix> phi;
    int n_max = -1;  // sweep range, towers only
    int m_max = -1;

    SemidirectModule tower() const {
        if (kind != "tower")
            throw Error("document does not describe a tower");
        return SemidirectModule(module, *rho, *phi);
    }
};

namespace detail {

// One meaningful line: 1-based number, leading-whitespace-stripped text,
// and the column at which that text starts.
struct DocLine {
    int number;
    int column;
    std::string text;
};

class SpecDocParser {
public:
    SpecDocParser(std::string_view text, std::optional<int> precision_override)
        : override_(precision_override) {
        int number = 0;
        size_t pos = 0;
        while (pos <= text.size()) {
            size_t eol = text.find('\n', pos);
            if (eol == std::string_view::npos) eol = text.size();
            std::string_view raw = text.substr(pos, eol - pos);
            ++number;
            size_t hash = raw.find('#');
            if (hash != std::string_view::npos) raw = raw.substr(0, hash);
            size_t begin = raw.find_first_not_of(" \t\r");
            if (begin != std::string_view::npos) {
                size_t end = raw.find_last_not_of(" \t\r");
                lines_.push_back(DocLine{number, static_cast<int>(begin) + 1,
                                         std::string(raw.substr(begin, end - begin + 1))});
            }
            if (eol == text.size()) break;
            pos = eol + 1;
        }
        last_line_ = number;
    }

    SpecDocument parse() {
        parse_header();
        PAdicContext ctx = make_context();
        std::optional<ModulePresentation> module;
        std::optional<RingAutomorphism> rho;
        std::optional<LambdaMatrix> phi;
        std::optional<std::vector<LambdaMatrix>> resolution;
        int n_max = -1;
        int m_max = -1;

        std::vector<std::string> seen;
        while (i_ < lines_.size()) {
            const DocLine& header = lines_[i_];
            if (header.text.front() != '[')
                fail(header, "expected a section header like [module]");
            std::string name = section_name(header);
            for (const auto& s : seen)
                if (s == name) fail(header, "duplicate section [" + name + "]");
            seen.push_back(name);
            ++i_;
            if (name == "module") {
                module = parse_module(ctx);
            } else if (name == "rho") {
                require_tower(header, name);
                rho = parse_rho(ctx);
            } else if (name == "phi") {
                require_tower(header, name);
                if (!module) fail(header, "[phi] must come after [module]");
                phi = parse_phi(ctx, module->b());
            } else if (name == "sweep") {
                require_tower(header, name);
                parse_sweep(n_max, m_max);
            } else if (name == "resolution") {
                if (!module) fail(header, "[resolution] must come after [module]");
                resolution = parse_resolution(ctx, *module);
            } else {
                fail(header, "unknown section [" + name + "]");
            }
        }

        if (!module) fail_at_end("missing [module] section");
        if (resolution) {
            std::vector<LambdaMatrix> higher = std::move(*resolution);
            module = ModulePresentation::raw_with_resolution(module->relations(),
                                                             std::move(higher));
        }
        if (kind_ == "tower") {
            if (!rho) fail_at_end("tower document is missing the [rho] section");
            if (!phi) fail_at_end("tower document is missing the [phi] section");
            if (n_max < 0 || m_max < 0)
                fail_at_end("tower document is missing the [sweep] section");
        }
        return SpecDocument{schema_version_, kind_,        std::move(ctx),
                            std::move(*module), std::move(rho), std::move(phi),
                            n_max,            m_max};
    }

private:
    [[noreturn]] void fail(const DocLine& line, const std::string& msg) const {
        throw ParseError(msg, line.number, line.column);
    }
    [[noreturn]] void fail_at_end(const std::string& msg) const {
        throw ParseError(msg, last_line_, 1);
    }

    static std::string first_word(const DocLine& line) {
        size_t end = line.text.find_first_of(" \t");
        return line.text.substr(0, end == std::string::npos ? line.text.size() : end);
    }

    // Remainder of the line after the first `skip` whitespace-separated
    // words, with the column where it starts.
    std::pair<std::string, int> rest_after(const DocLine& line, int skip) const {
        size_t pos = 0;
        for (int k = 0; k < skip; ++k) {
            pos = line.text.find_first_of(" \t", pos);
            if (pos == std::string::npos) fail(line, "missing argument");
            pos = line.text.find_first_not_of(" \t", pos);
            if (pos == std::string::npos) fail(line, "missing argument");
        }
        return {line.text.substr(pos), line.column + static_cast<int>(pos)};
    }

    std::vector<std::string> words(const DocLine& line) const {
        std::vector<std::string> out;
        std::istringstream in(line.text);
        std::string w;
        while (in >> w) out.push_back(w);
        return out;
    }

    long long parse_int(const DocLine& line, const std::string& word,
                        const char* what) const {
        try {
            size_t used = 0;
            long long v = std::stoll(word, &used);
            if (used != word.size()) throw std::invalid_argument(word);
            return v;
        } catch (const std::exception&) {
            fail(line, std::string("expected an integer ") + what + ", got '" + word + "'");
        }
    }

    std::string section_name(const DocLine& line) const {
        if (line.text.back() != ']' || line.text.size() < 3)
            fail(line, "malformed section header");
        return line.text.substr(1, line.text.size() - 2);
    }

    void require_tower(const DocLine& line, const std::string& section) const {
        if (kind_ != "tower")
            fail(line, "section [" + section + "] is only valid in a tower document");
    }

    // Header: schema_version first, then kind/prime/r/precision (+ optional
    // guard), all before any section.
    void parse_header() {
        if (lines_.empty()) fail_at_end("empty document");
        {
            const DocLine& first = lines_[0];
            if (first_word(first) != "schema_version")
                fail(first, "schema_version must be the first field");
            auto w = words(first);
            if (w.size() != 2) fail(first, "schema_version takes one value");
            schema_version_ = static_cast<int>(parse_int(first, w[1], "schema version"));
            if (schema_version_ != 1)
                fail(first, "unsupported schema_version " + w[1] + " (supported: 1)");
        }
        i_ = 1;
        bool saw_kind = false, saw_prime = false, saw_r = false, saw_precision = false;
        while (i_ < lines_.size() && lines_[i_].text.front() != '[') {
            const DocLine& line = lines_[i_];
            auto w = words(line);
            const std::string& key = w[0];
            auto once = [&](bool& flag) {
                if (flag) fail(line, "duplicate field " + key);
                flag = true;
                if (w.size() != 2) fail(line, key + " takes one value");
            };
            if (key == "kind") {
                once(saw_kind);
                kind_ = w[1];
                if (kind_ != "module" && kind_ != "tower")
                    fail(line, "kind must be module or tower, got '" + kind_ + "'");
            } else if (key == "prime") {
                once(saw_prime);
                prime_ = parse_int(line, w[1], "prime");
                if (prime_ < 2) fail(line, "prime must be at least 2");
            } else if (key == "r") {
                once(saw_r);
                r_ = static_cast<int>(parse_int(line, w[1], "variable count"));
                if (r_ < 1) fail(line, "r must be at least 1");
            } else if (key == "precision") {
                once(saw_precision);
                precision_ = static_cast<int>(parse_int(line, w[1], "precision"));
                if (precision_ < 2) fail(line, "precision must be at least 2");
            } else if (key == "guard") {
                if (guard_ != 0) fail(line, "duplicate field guard");
                if (w.size() != 2) fail(line, "guard takes one value");
                guard_ = static_cast<int>(parse_int(line, w[1], "guard"));
                if (guard_ < 1) fail(line, "guard must be at least 1");
            } else if (key == "schema_version") {
                fail(line, "duplicate field schema_version");
            } else {
                fail(line, "unknown field '" + key + "'");
            }
            ++i_;
        }
        const DocLine& where = i_ < lines_.size() ? lines_[i_] : lines_.back();
        if (!saw_kind) fail(where, "missing field kind");
        if (!saw_prime) fail(where, "missing field prime");
        if (!saw_r) fail(where, "missing field r");
        if (!saw_precision) fail(where, "missing field precision");
        if (guard_ == 0) guard_ = 2;
    }

    PAdicContext make_context() const {
        const int doc_n = precision_;
        int n = override_.value_or(doc_n);
        int n_max = std::min(2 * doc_n, detail::max_supported_precision(
                                            static_cast<u64>(prime_)));
        // The override must respect the document's certified envelope.
        return PAdicContext(static_cast<u64>(prime_), n, n_max, guard_);
    }

    bool at_section_end() const {
        return i_ >= lines_.size() || lines_[i_].text.front() == '[';
    }

    LambdaElement parse_poly_tail(const DocLine& line, int skip_words,
                                  const PAdicContext& ctx) const {
        auto [text, col] = rest_after(line, skip_words);
        return parse_lambda(text, ctx, r_, line.number, col);
    }

    ModulePresentation parse_module(const PAdicContext& ctx) {
        std::string constructor;
        std::vector<std::pair<DocLine, std::string>> body;
        const DocLine* ctor_line = nullptr;
        while (!at_section_end()) {
            const DocLine& line = lines_[i_];
            if (first_word(line) == "constructor") {
                if (!constructor.empty()) fail(line, "duplicate field constructor");
                auto w = words(line);
                if (w.size() != 2) fail(line, "constructor takes one value");
                constructor = w[1];
                ctor_line = &line;
            } else {
                body.emplace_back(line, first_word(line));
            }
            ++i_;
        }
        if (constructor.empty()) fail_at_end("module section is missing the constructor");

        auto expect_keys = [&](std::initializer_list<const char*> allowed) {
            for (const auto& [line, key] : body) {
                bool ok = false;
                for (const char* a : allowed) ok = ok || key == a;
                if (!ok)
                    fail(line, "field '" + key + "' is not valid for constructor " +
                                   constructor);
            }
        };

        if (constructor == "free") {
            expect_keys({"generators"});
            std::optional<int> gens;
            for (const auto& [line, key] : body) {
                auto w = words(line);
                if (w.size() != 2) fail(line, "generators takes one value");
                if (gens) fail(line, "duplicate field generators");
                gens = static_cast<int>(parse_int(line, w[1], "generator count"));
            }
            if (!gens) fail(*ctor_line, "free module needs a generators field");
            return ModulePresentation::free_module(ctx, r_, *gens);
        }
        if (constructor == "cyclic") {
            expect_keys({"poly", "power"});
            std::optional<LambdaElement> f;
            int power = 1;
            for (const auto& [line, key] : body) {
                if (key == "poly") {
                    if (f) fail(line, "cyclic takes a single poly");
                    f = parse_poly_tail(line, 1, ctx);
                } else {
                    auto w = words(line);
                    if (w.size() != 2) fail(line, "power takes one value");
                    power = static_cast<int>(parse_int(line, w[1], "power"));
                }
            }
            if (!f) fail(*ctor_line, "cyclic module needs a poly field");
            return ModulePresentation::cyclic(*f, power);
        }
        if (constructor == "p_cyclic") {
            expect_keys({"exponent"});
            std::optional<int> a;
            for (const auto& [line, key] : body) {
                auto w = words(line);
                if (w.size() != 2) fail(line, "exponent takes one value");
                if (a) fail(line, "duplicate field exponent");
                a = static_cast<int>(parse_int(line, w[1], "exponent"));
            }
            if (!a) fail(*ctor_line, "p_cyclic module needs an exponent field");
            return ModulePresentation::p_cyclic(ctx, r_, *a);
        }
        if (constructor == "koszul") {
            expect_keys({"poly"});
            std::vector<LambdaElement> seq;
            for (const auto& [line, key] : body) {
                (void)key;
                seq.push_back(parse_poly_tail(line, 1, ctx));
            }
            if (seq.empty()) fail(*ctor_line, "koszul module needs poly fields");
            return ModulePresentation::koszul(seq);
        }
        if (constructor == "direct_sum") {
            expect_keys({"summand"});
            std::optional<ModulePresentation> acc;
            for (const auto& [line, key] : body) {
                (void)key;
                auto w = words(line);
                if (w.size() < 2) fail(line, "summand needs a constructor");
                ModulePresentation part = [&]() -> ModulePresentation {
                    if (w[1] == "free") {
                        if (w.size() != 3) fail(line, "summand free takes a generator count");
                        return ModulePresentation::free_module(
                            ctx, r_, static_cast<int>(parse_int(line, w[2], "generator count")));
                    }
                    if (w[1] == "p_cyclic") {
                        if (w.size() != 3) fail(line, "summand p_cyclic takes an exponent");
                        return ModulePresentation::p_cyclic(
                            ctx, r_, static_cast<int>(parse_int(line, w[2], "exponent")));
                    }
                    if (w[1] == "cyclic") return ModulePresentation::cyclic(
                        parse_poly_tail(line, 2, ctx));
                    fail(line, "summand constructor must be free, cyclic, or p_cyclic");
                }();
                if (!acc)
                    acc = std::move(part);
                else
                    acc = ModulePresentation::direct_sum(*acc, part);
            }
            if (!acc) fail(*ctor_line, "direct_sum module needs summand fields");
            return std::move(*acc);
        }
        if (constructor == "presentation") {
            expect_keys({"rows", "cols", "entry"});
            std::optional<int> rows, cols;
            std::vector<const DocLine*> entries;
            for (const auto& [line, key] : body) {
                if (key == "rows" || key == "cols") {
                    auto w = words(line);
                    if (w.size() != 2) fail(line, key + " takes one value");
                    auto& slot = key == "rows" ? rows : cols;
                    if (slot) fail(line, "duplicate field " + key);
                    slot = static_cast<int>(parse_int(line, w[1], "size"));
                    if (*slot < 0) fail(line, key + " must be nonnegative");
                } else {
                    entries.push_back(&line);
                }
            }
            if (!rows || !cols)
                fail(*ctor_line, "presentation needs rows and cols fields");
            LambdaMatrix rel(ctx, r_, *rows, *cols);
            for (const DocLine* line : entries) read_entry(*line, ctx, rel);
            return ModulePresentation::raw(std::move(rel));
        }
        fail(*ctor_line, "unknown constructor '" + constructor + "'");
    }

    // entry <row> <col> <poly>, 1-based indices.
    void read_entry(const DocLine& line, const PAdicContext& ctx, LambdaMatrix& m) const {
        auto w = words(line);
        if (w.size() < 4) fail(line, "entry takes row, column, and a polynomial");
        int i = static_cast<int>(parse_int(line, w[1], "row"));
        int j = static_cast<int>(parse_int(line, w[2], "column"));
        if (i < 1 || i > m.rows() || j < 1 || j > m.cols())
            fail(line, "entry position (" + w[1] + ", " + w[2] + ") outside a " +
                           std::to_string(m.rows()) + " x " + std::to_string(m.cols()) +
                           " matrix");
        m.at(i - 1, j - 1) = parse_poly_tail(line, 3, ctx);
    }

    RingAutomorphism parse_rho(const PAdicContext& ctx) {
        ZpMatrix rho(ctx, r_, r_);
        int row = 0;
        while (!at_section_end()) {
            const DocLine& line = lines_[i_];
            auto w = words(line);
            if (w[0] != "row") fail(line, "rho section contains only row fields");
            if (row >= r_) fail(line, "too many rho rows (expected " + std::to_string(r_) + ")");
            if (static_cast<int>(w.size()) != r_ + 1)
                fail(line, "rho row needs " + std::to_string(r_) + " entries");
            for (int j = 0; j < r_; ++j)
                rho.set_int(row, j, parse_int(line, w[static_cast<size_t>(j) + 1], "rho entry"));
            ++row;
            ++i_;
        }
        if (row != r_) fail_at_end("rho needs " + std::to_string(r_) + " rows");
        return RingAutomorphism(rho);
    }

    LambdaMatrix parse_phi(const PAdicContext& ctx, int b) {
        LambdaMatrix phi(ctx, r_, b, b);
        while (!at_section_end()) {
            const DocLine& line = lines_[i_];
            if (first_word(line) != "entry")
                fail(line, "phi section contains only entry fields");
            read_entry(line, ctx, phi);
            ++i_;
        }
        return phi;
    }

    void parse_sweep(int& n_max, int& m_max) {
        while (!at_section_end()) {
            const DocLine& line = lines_[i_];
            auto w = words(line);
            if (w.size() != 2) fail(line, "sweep fields take one value");
            int v = static_cast<int>(parse_int(line, w[1], "sweep bound"));
            if (v < 0) fail(line, "sweep bounds must be nonnegative");
            if (w[0] == "n_max") {
                if (n_max >= 0) fail(line, "duplicate field n_max");
                n_max = v;
            } else if (w[0] == "m_max") {
                if (m_max >= 0) fail(line, "duplicate field m_max");
                m_max = v;
            } else {
                fail(line, "unknown sweep field '" + w[0] + "'");
            }
            ++i_;
        }
        if (n_max < 0 || m_max < 0) fail_at_end("sweep needs n_max and m_max");
    }

    // matrix <rows> <cols> followed by its entry lines, repeated for each
    // higher map of the resolution (the presentation itself is map zero).
    std::vector<LambdaMatrix> parse_resolution(const PAdicContext& ctx,
                                               const ModulePresentation& module) {
        std::vector<LambdaMatrix> maps;
        while (!at_section_end()) {
            const DocLine& line = lines_[i_];
            auto w = words(line);
            if (w[0] == "matrix") {
                if (w.size() != 3) fail(line, "matrix takes rows and cols");
                int rows = static_cast<int>(parse_int(line, w[1], "rows"));
                int cols = static_cast<int>(parse_int(line, w[2], "cols"));
                if (rows < 0 || cols < 0) fail(line, "matrix sizes must be nonnegative");
                maps.emplace_back(ctx, r_, rows, cols);
            } else if (w[0] == "entry") {
                if (maps.empty()) fail(line, "entry before the first matrix field");
                read_entry(line, ctx, maps.back());
            } else {
                fail(line, "resolution section contains only matrix and entry fields");
            }
            ++i_;
        }
        if (maps.empty()) fail_at_end("resolution needs at least one matrix");
        (void)module;
        return maps;
    }

    std::optional<int> override_;
    std::vector<DocLine> lines_;
    size_t i_ = 0;
    int last_line_ = 1;

    int schema_version_ = 0;
    std::string kind_;
    long long prime_ = 0;
    int r_ = 0;
    int precision_ = 0;
    int guard_ = 0;
};

}  // namespace detail

inline SpecDocument parse_spec_document(std::string_view text,
                                        std::optional<int> precision_override = {}) {
    return detail::SpecDocParser(text, precision_override).parse();
}

inline SpecDocument load_spec_document(const std::string& path,
                                       std::optional<int> precision_override = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open spec document: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_spec_document(buf.str(), precision_override);
}

}  // namespace iwa
