#pragma once

// Parser for polynomial expressions over Zp in the variables T1..Tr.
//
// Grammar (whitespace insignificant):
//   expr   := ['-'] term (('+' | '-') term)*
//   term   := factor ('*' factor)*
//   factor := atom ['^' INT]
//   atom   := INT | 'p' | 'T' INT | '(' expr ')'
//
// INT is a nonnegative decimal literal.  Coefficients are reduced mod p^N;
// exponents must stay within the supported degree range.  'p' denotes the
// context's prime.  Variable indices are 1-based: T1, ..., Tr.

#include <string>
#include <string_view>

#include "iwa/errors.hpp"
#include "iwa/lambda.hpp"
#include "iwa/padic.hpp"

namespace iwa {

namespace detail {

class PolyParser {
public:
    PolyParser(std::string_view text, const PAdicContext& ctx, int r,
               int base_line, int base_col)
        : s_(text), ctx_(ctx), r_(r), line_(base_line), col_(base_col) {}

    LambdaElement parse() {
        skip_ws();
        if (at_end()) fail("empty polynomial");
        LambdaElement e = parse_expr();
        skip_ws();
        if (!at_end()) fail("unexpected trailing input");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, line_, col_);
    }

    bool at_end() const { return i_ >= s_.size(); }
    char peek() const { return at_end() ? '\0' : s_[i_]; }

    void advance() {
        if (at_end()) return;
        if (s_[i_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++i_;
    }

    void skip_ws() {
        while (!at_end() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\n' ||
                             s_[i_] == '\r'))
            advance();
    }

    bool consume(char c) {
        skip_ws();
        if (peek() != c) return false;
        advance();
        return true;
    }

    static bool is_digit(char c) { return c >= '0' && c <= '9'; }

    // Nonnegative integer literal reduced mod p^N.
    u64 parse_coefficient() {
        if (!is_digit(peek())) fail("expected a number");
        u64 v = 0;
        const u64 mod = ctx_.modulus();
        while (is_digit(peek())) {
            v = static_cast<u64>(
                (static_cast<u128>(v) * 10 + static_cast<u64>(peek() - '0')) % mod);
            advance();
        }
        return v;
    }

    // Nonnegative integer literal used as an exponent or variable index.
    u64 parse_plain_int(const char* what) {
        if (!is_digit(peek())) fail(std::string("expected ") + what);
        u64 v = 0;
        while (is_digit(peek())) {
            v = v * 10 + static_cast<u64>(peek() - '0');
            if (v > 1000000) fail(std::string(what) + " is too large");
            advance();
        }
        return v;
    }

    LambdaElement parse_expr() {
        skip_ws();
        bool neg = consume('-');
        LambdaElement acc = parse_term();
        if (neg) acc = -acc;
        for (;;) {
            skip_ws();
            if (peek() == '+') {
                advance();
                acc = acc + parse_term();
            } else if (peek() == '-') {
                advance();
                acc = acc - parse_term();
            } else {
                break;
            }
        }
        return acc;
    }

    LambdaElement parse_term() {
        LambdaElement acc = parse_factor();
        while (consume('*')) acc = acc * parse_factor();
        return acc;
    }

    LambdaElement parse_factor() {
        LambdaElement a = parse_atom();
        if (consume('^')) {
            skip_ws();
            u64 e = parse_plain_int("an exponent");
            a = a.pow(e);
        }
        return a;
    }

    LambdaElement parse_atom() {
        skip_ws();
        char c = peek();
        if (is_digit(c)) {
            u64 v = parse_coefficient();
            return LambdaElement::monomial(ctx_, Exponents(static_cast<size_t>(r_), 0), v);
        }
        if (c == 'p') {
            advance();
            return LambdaElement::constant(ctx_, r_, static_cast<long long>(ctx_.p()));
        }
        if (c == 'T') {
            advance();
            if (!is_digit(peek())) fail("expected a variable index after T");
            u64 idx = parse_plain_int("a variable index");
            if (idx < 1 || idx > static_cast<u64>(r_))
                fail("variable T" + std::to_string(idx) + " is out of range (r = " +
                     std::to_string(r_) + ")");
            return LambdaElement::variable(ctx_, r_, static_cast<int>(idx) - 1);
        }
        if (c == '(') {
            advance();
            LambdaElement e = parse_expr();
            if (!consume(')')) fail("expected ')'");
            return e;
        }
        fail("expected a number, p, T<k>, or a parenthesized expression");
    }

    std::string_view s_;
    size_t i_ = 0;
    const PAdicContext& ctx_;
    int r_;
    int line_;
    int col_;
};

}  // namespace detail

// Parses a polynomial over Zp in variables T1..Tr.  base_line/base_col give
// the position of the first character inside an enclosing document so that
// ParseError positions point into that document.
inline LambdaElement parse_lambda(std::string_view text, const PAdicContext& ctx,
                                  int r, int base_line = 1, int base_col = 1) {
    return detail::PolyParser(text, ctx, r, base_line, base_col).parse();
}

}  // namespace iwa
