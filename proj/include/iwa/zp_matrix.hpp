#pragma once

#include <algorithm>
#include <concepts>
#include <deque>
#include <map>
#include <optional>
#include <type_traits>
#include <utility>
#include <vector>

#include "padic.hpp"

namespace iwa {

// Dense matrix of canonical residues in [0, p^N), row-major.
// Instances are value types; treat them as immutable once built and share freely.
class ZpMatrix {
public:
    ZpMatrix(PAdicContext ctx, int rows, int cols)
        : ctx_(std::move(ctx)), rows_(rows), cols_(cols),
          data_(static_cast<size_t>(rows) * cols, 0) {
        if (rows < 0 || cols < 0) throw DimensionMismatch("negative matrix dimension");
    }

    static ZpMatrix identity(const PAdicContext& ctx, int n) {
        ZpMatrix m(ctx, n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1;
        return m;
    }

    const PAdicContext& ctx() const { return ctx_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }

    u64& at(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    u64 at(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

    void set_int(int i, int j, long long v) { at(i, j) = ctx_.reduce_int(v); }

    bool operator==(const ZpMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

    ZpMatrix operator*(const ZpMatrix& o) const {
        if (cols_ != o.rows_) throw DimensionMismatch("matrix product shape mismatch");
        ZpMatrix r(ctx_, rows_, o.cols_);
        for (int i = 0; i < rows_; ++i)
            for (int k = 0; k < cols_; ++k) {
                u64 a = at(i, k);
                if (a == 0) continue;
                for (int j = 0; j < o.cols_; ++j)
                    r.at(i, j) = ctx_.add(r.at(i, j), ctx_.mul(a, o.at(k, j)));
            }
        return r;
    }

    ZpMatrix operator-(const ZpMatrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw DimensionMismatch("matrix difference shape mismatch");
        ZpMatrix r(ctx_, rows_, cols_);
        for (size_t i = 0; i < data_.size(); ++i) r.data_[i] = ctx_.sub(data_[i], o.data_[i]);
        return r;
    }

    ZpMatrix operator+(const ZpMatrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw DimensionMismatch("matrix sum shape mismatch");
        ZpMatrix r(ctx_, rows_, cols_);
        for (size_t i = 0; i < data_.size(); ++i) r.data_[i] = ctx_.add(data_[i], o.data_[i]);
        return r;
    }

    // this ^ e by repeated squaring; exponent may reach p^n, so u64.
    ZpMatrix power(u64 e) const {
        if (rows_ != cols_) throw DimensionMismatch("matrix power needs a square matrix");
        ZpMatrix base = *this;
        ZpMatrix acc = identity(ctx_, rows_);
        while (e) {
            if (e & 1) acc = acc * base;
            base = base * base;
            e >>= 1;
        }
        return acc;
    }

    std::vector<u64> column(int j) const {
        std::vector<u64> c(rows_);
        for (int i = 0; i < rows_; ++i) c[i] = at(i, j);
        return c;
    }

    std::vector<u64> apply(const std::vector<u64>& v) const {
        if (static_cast<int>(v.size()) != cols_)
            throw DimensionMismatch("matrix-vector shape mismatch");
        std::vector<u64> r(rows_, 0);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j)
                if (at(i, j) && v[j]) r[i] = ctx_.add(r[i], ctx_.mul(at(i, j), v[j]));
        return r;
    }

    // [this | right], side by side.
    ZpMatrix augment(const ZpMatrix& right) const {
        if (rows_ != right.rows_) throw DimensionMismatch("augment row mismatch");
        ZpMatrix r(ctx_, rows_, cols_ + right.cols_);
        for (int i = 0; i < rows_; ++i) {
            for (int j = 0; j < cols_; ++j) r.at(i, j) = at(i, j);
            for (int j = 0; j < right.cols_; ++j) r.at(i, cols_ + j) = right.at(i, j);
        }
        return r;
    }

    // Every entry vanishes within the guard band.
    bool is_zero_mod_guard() const {
        int t = ctx_.certified_threshold();
        for (u64 v : data_)
            if (ctx_.valuation(v) < t) return false;
        return true;
    }

private:
    PAdicContext ctx_;
    int rows_, cols_;
    std::vector<u64> data_;
};

// One diagonal valuation of a Smith form.  capped means "at least N - guard":
// the pivot vanished within the guard band, so the true value is unknown.
struct PivotValuation {
    int value;
    bool capped;
    bool operator==(const PivotValuation&) const = default;
};

// Unimodular transforms with U * A * V diagonal (exactly mod p^N when
// every valuation is exact; modulo the guard band otherwise).
struct SmithTransforms {
    ZpMatrix U, U_inv, V, V_inv;
};

struct SmithResult {
    std::vector<PivotValuation> valuations;  // length min(rows, cols), sorted
    int exact_count = 0;                     // prefix of valuations that are exact
    std::optional<SmithTransforms> transforms;

    bool certified() const { return exact_count == static_cast<int>(valuations.size()); }
};

// Smith normal form over Zp at capped precision.  The pivot is the entry of
// minimal p-valuation, ties broken by lowest (row, col); since Zp is local,
// one elimination pass per pivot clears its row and column exactly, and the
// diagonal valuations come out sorted.  Elimination stops once the minimal
// valuation reaches N - guard; the remaining diagonal is reported capped.
inline SmithResult smith_normal_form(const ZpMatrix& input, bool want_transforms = false) {
    const PAdicContext& ctx = input.ctx();
    ZpMatrix a = input;
    const int rows = a.rows(), cols = a.cols();
    const int limit = std::min(rows, cols);
    const int threshold = ctx.certified_threshold();

    std::optional<SmithTransforms> tf;
    if (want_transforms)
        tf = SmithTransforms{ZpMatrix::identity(ctx, rows), ZpMatrix::identity(ctx, rows),
                             ZpMatrix::identity(ctx, cols), ZpMatrix::identity(ctx, cols)};

    auto swap_rows = [&](int i, int k) {
        if (i == k) return;
        for (int j = 0; j < cols; ++j) std::swap(a.at(i, j), a.at(k, j));
        if (tf) {
            for (int j = 0; j < rows; ++j) std::swap(tf->U.at(i, j), tf->U.at(k, j));
            for (int j = 0; j < rows; ++j) std::swap(tf->U_inv.at(j, i), tf->U_inv.at(j, k));
        }
    };
    auto swap_cols = [&](int j, int k) {
        if (j == k) return;
        for (int i = 0; i < rows; ++i) std::swap(a.at(i, j), a.at(i, k));
        if (tf) {
            for (int i = 0; i < cols; ++i) std::swap(tf->V.at(i, j), tf->V.at(i, k));
            for (int i = 0; i < cols; ++i) std::swap(tf->V_inv.at(j, i), tf->V_inv.at(k, i));
        }
    };
    // row_i -= c * row_k
    auto row_sub = [&](int i, int k, u64 c) {
        if (c == 0) return;
        for (int j = 0; j < cols; ++j) a.at(i, j) = ctx.sub(a.at(i, j), ctx.mul(c, a.at(k, j)));
        if (tf) {
            for (int j = 0; j < rows; ++j)
                tf->U.at(i, j) = ctx.sub(tf->U.at(i, j), ctx.mul(c, tf->U.at(k, j)));
            for (int j = 0; j < rows; ++j)
                tf->U_inv.at(j, k) = ctx.add(tf->U_inv.at(j, k), ctx.mul(c, tf->U_inv.at(j, i)));
        }
    };
    // col_j -= c * col_k
    auto col_sub = [&](int j, int k, u64 c) {
        if (c == 0) return;
        for (int i = 0; i < rows; ++i) a.at(i, j) = ctx.sub(a.at(i, j), ctx.mul(c, a.at(i, k)));
        if (tf) {
            for (int i = 0; i < cols; ++i)
                tf->V.at(i, j) = ctx.sub(tf->V.at(i, j), ctx.mul(c, tf->V.at(i, k)));
            for (int i = 0; i < cols; ++i)
                tf->V_inv.at(k, i) = ctx.add(tf->V_inv.at(k, i), ctx.mul(c, tf->V_inv.at(j, i)));
        }
    };
    auto row_scale = [&](int k, u64 s) {
        for (int j = 0; j < cols; ++j) a.at(k, j) = ctx.mul(a.at(k, j), s);
        if (tf) {
            u64 sinv = ctx.inverse(s);
            for (int j = 0; j < rows; ++j) tf->U.at(k, j) = ctx.mul(tf->U.at(k, j), s);
            for (int j = 0; j < rows; ++j) tf->U_inv.at(j, k) = ctx.mul(tf->U_inv.at(j, k), sinv);
        }
    };

    SmithResult result;
    int k = 0;
    for (; k < limit; ++k) {
        int best_i = -1, best_j = -1, best_v = ctx.precision() + 1;
        for (int i = k; i < rows; ++i)
            for (int j = k; j < cols; ++j) {
                int v = ctx.valuation(a.at(i, j));
                if (v < best_v) {
                    best_v = v;
                    best_i = i;
                    best_j = j;
                }
            }
        if (best_v >= threshold) break;

        swap_rows(best_i, k);
        swap_cols(best_j, k);

        const int v = best_v;
        const u64 unit = ctx.shift_down(a.at(k, k), v);
        const u64 unit_inv = ctx.inverse(unit);
        for (int i = k + 1; i < rows; ++i)
            if (a.at(i, k) != 0)
                row_sub(i, k, ctx.mul(ctx.shift_down(a.at(i, k), v), unit_inv));
        for (int j = k + 1; j < cols; ++j)
            if (a.at(k, j) != 0)
                col_sub(j, k, ctx.mul(ctx.shift_down(a.at(k, j), v), unit_inv));
        row_scale(k, unit_inv);  // pivot becomes exactly p^v
        result.valuations.push_back({v, false});
    }
    result.exact_count = k;
    for (; k < limit; ++k) result.valuations.push_back({threshold, true});
    result.transforms = std::move(tf);
    return result;
}

// Isomorphism class of a finitely generated Zp-module at capped precision.
// Torsion exponents are sorted ascending and lie strictly below N - guard;
// certified is cleared when any Smith divisor was capped (such rows cannot be
// told apart from free summands and are counted as free rank).
struct FiniteZpModule {
    std::vector<int> torsion_exponents;
    int free_rank = 0;
    bool certified = true;

    long long e() const {
        long long s = 0;
        for (int t : torsion_exponents) s += t;
        return s;
    }
    int rank() const { return free_rank; }
    bool operator==(const FiniteZpModule&) const = default;
};

// Structure of coker(A : Zp^cols -> Zp^rows).
inline FiniteZpModule cokernel_structure(const ZpMatrix& a) {
    SmithResult s = smith_normal_form(a);
    FiniteZpModule m;
    for (int i = 0; i < s.exact_count; ++i)
        if (s.valuations[i].value > 0) m.torsion_exponents.push_back(s.valuations[i].value);
    std::sort(m.torsion_exponents.begin(), m.torsion_exponents.end());
    m.free_rank = a.rows() - s.exact_count;
    m.certified = s.certified();
    return m;
}

struct KernelBasis {
    ZpMatrix basis;  // cols = kernel rank; a saturated direct summand when certified
    bool certified;
};

// Saturated kernel of A over Zp: columns of V past the exact divisors.
// Capped divisors are treated as true zeros, which clears certified.
inline KernelBasis kernel_basis(const ZpMatrix& a) {
    SmithResult s = smith_normal_form(a, true);
    const int n = a.cols();
    const int k = n - s.exact_count;
    ZpMatrix basis(a.ctx(), n, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < n; ++i) basis.at(i, j) = s.transforms->V.at(i, s.exact_count + j);
    return {std::move(basis), s.certified()};
}

// Structure of ker(d_out) / im(d_in) for a two-step complex
//   Zp^a --d_in--> Zp^n --d_out--> Zp^q.
// Requires d_out * d_in = 0 within the guard band.  The kernel basis of d_out
// is lifted from the Smith transform at full precision N, and the images of
// d_in are rewritten in that basis; coordinates outside the kernel block are
// guaranteed small by the composability check and are dropped.
inline FiniteZpModule homology_structure(const ZpMatrix& d_in, const ZpMatrix& d_out) {
    const PAdicContext& ctx = d_in.ctx();
    if (d_out.cols() != d_in.rows())
        throw DimensionMismatch("homology: d_out and d_in do not compose");
    if (!(d_out * d_in).is_zero_mod_guard())
        throw ComplexNotComposable("d_out * d_in does not vanish within the guard band");

    SmithResult s = smith_normal_form(d_out, true);
    const int n = d_out.cols();
    const int kdim = n - s.exact_count;

    ZpMatrix y = s.transforms->V_inv * d_in;  // coordinates in the Smith basis
    ZpMatrix induced(ctx, kdim, d_in.cols());
    for (int i = 0; i < kdim; ++i)
        for (int j = 0; j < d_in.cols(); ++j) induced.at(i, j) = y.at(s.exact_count + i, j);

    FiniteZpModule h = cokernel_structure(induced);
    h.certified = h.certified && s.certified();
    return h;
}

// Inverse of a matrix whose determinant is a unit, by Gauss-Jordan mod p^N.
inline ZpMatrix invert_unimodular(const ZpMatrix& m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("inverse of a non-square matrix");
    const PAdicContext& ctx = m.ctx();
    const int n = m.rows();
    ZpMatrix a = m;
    ZpMatrix inv = ZpMatrix::identity(ctx, n);
    for (int k = 0; k < n; ++k) {
        int piv = -1;
        for (int i = k; i < n; ++i)
            if (ctx.is_unit(a.at(i, k))) {
                piv = i;
                break;
            }
        if (piv < 0) throw Error("matrix is not unimodular");
        if (piv != k)
            for (int j = 0; j < n; ++j) {
                std::swap(a.at(piv, j), a.at(k, j));
                std::swap(inv.at(piv, j), inv.at(k, j));
            }
        u64 s = ctx.inverse(a.at(k, k));
        for (int j = 0; j < n; ++j) {
            a.at(k, j) = ctx.mul(a.at(k, j), s);
            inv.at(k, j) = ctx.mul(inv.at(k, j), s);
        }
        for (int i = 0; i < n; ++i) {
            if (i == k || a.at(i, k) == 0) continue;
            u64 c = a.at(i, k);
            for (int j = 0; j < n; ++j) {
                a.at(i, j) = ctx.sub(a.at(i, j), ctx.mul(c, a.at(k, j)));
                inv.at(i, j) = ctx.sub(inv.at(i, j), ctx.mul(c, inv.at(k, j)));
            }
        }
    }
    return inv;
}

// Provable membership of w in the column span of A, up to the guard band.
inline bool in_column_span(const SmithResult& snf, const std::vector<u64>& w,
                           const PAdicContext& ctx) {
    if (!snf.transforms) throw Error("membership test needs Smith transforms");
    const ZpMatrix& u = snf.transforms->U;
    std::vector<u64> y = u.apply(w);
    const int threshold = ctx.certified_threshold();
    for (int i = 0; i < static_cast<int>(y.size()); ++i) {
        int need = i < snf.exact_count ? snf.valuations[i].value : threshold;
        if (ctx.valuation(y[i]) < need) return false;
    }
    return true;
}

template <typename R>
concept Certifiable = requires(const R& r) {
    { r.certified } -> std::convertible_to<bool>;
};

template <typename R>
struct EscalationOutcome {
    R value;
    int precision_used;
    bool certified;
};

// Runs a computation description at increasing precision until its result
// certifies.  N doubles, capped at N_max; per the context policy, exhausting
// the ceiling without certification either throws or returns the last result.
template <typename F>
    requires Certifiable<std::invoke_result_t<F, const PAdicContext&>>
auto escalate_and_retry(F&& computation, PAdicContext ctx)
    -> EscalationOutcome<std::invoke_result_t<F, const PAdicContext&>> {
    for (;;) {
        auto result = computation(static_cast<const PAdicContext&>(ctx));
        if (result.certified)
            return {std::move(result), ctx.precision(), true};
        if (ctx.precision() >= ctx.precision_max()) {
            if (ctx.policy() == EscalationPolicy::Throw)
                throw PrecisionExhausted("uncertified at N_max = " +
                                         std::to_string(ctx.precision_max()));
            return {std::move(result), ctx.precision(), false};
        }
        ctx = ctx.escalated();
    }
}

// Canonical column span over Z/p^N (Howell form).  Pivot columns have their
// leading entry normalized to an exact power of p, zeros above the lead, and
// pivot-row entries of the other columns reduced; annihilator shadows keep the
// span closed, so equal spans produce identical forms and membership testing
// is a single top-down reduction.
class HowellSpan {
public:
    HowellSpan(PAdicContext ctx, int dim) : ctx_(std::move(ctx)), dim_(dim) {}

    int dim() const { return dim_; }

    // Returns true when the column enlarged the span.
    bool insert(std::vector<u64> col) {
        bool grew = false;
        std::deque<std::vector<u64>> queue;
        queue.push_back(std::move(col));
        while (!queue.empty()) {
            std::vector<u64> c = std::move(queue.front());
            queue.pop_front();
            for (int row = 0; row < dim_; ++row) {
                if (c[row] == 0) continue;
                int vc = ctx_.valuation(c[row]);
                auto it = pivot_at_.find(row);
                if (it == pivot_at_.end()) {
                    normalize(c, row, vc);
                    if (vc > 0) queue.push_back(shadow(c, row, vc));
                    pivot_at_[row] = static_cast<int>(pivots_.size());
                    pivots_.push_back({row, vc, std::move(c)});
                    grew = true;
                    break;
                }
                Pivot& p = pivots_[it->second];
                if (vc < p.val) {
                    normalize(c, row, vc);
                    std::swap(p.col, c);
                    std::swap(p.val, vc);  // p now leads with the smaller valuation
                    queue.push_back(shadow(p.col, row, p.val));
                    queue.push_back(std::move(c));  // displaced column re-reduces
                    grew = true;
                    break;
                }
                // vc >= p.val and the pivot lead is exactly p^val: clear this row
                axpy(c, p.col, ctx_.shift_down(c[row], p.val));
            }
        }
        if (grew) reduce_above();
        return grew;
    }

    bool contains(const std::vector<u64>& v) const {
        std::vector<u64> c = v;
        for (int row = 0; row < dim_; ++row) {
            if (c[row] == 0) continue;
            auto it = pivot_at_.find(row);
            if (it == pivot_at_.end()) return false;
            const Pivot& p = pivots_[it->second];
            if (ctx_.valuation(c[row]) < p.val) return false;
            axpy(c, p.col, ctx_.shift_down(c[row], p.val));
        }
        return true;
    }

    // Pivot columns as a matrix, ordered by pivot row; canonical for the span.
    ZpMatrix basis_matrix() const {
        std::vector<int> order;
        for (const auto& [row, idx] : sorted_pivots()) order.push_back(idx);
        ZpMatrix m(ctx_, dim_, static_cast<int>(order.size()));
        for (int j = 0; j < static_cast<int>(order.size()); ++j)
            for (int i = 0; i < dim_; ++i) m.at(i, j) = pivots_[order[j]].col[i];
        return m;
    }

    // Structure of Zp^dim / span.
    FiniteZpModule quotient_structure() const { return cokernel_structure(basis_matrix()); }

private:
    struct Pivot {
        int row;
        int val;
        std::vector<u64> col;
    };

    std::vector<std::pair<int, int>> sorted_pivots() const {
        std::vector<std::pair<int, int>> v(pivot_at_.begin(), pivot_at_.end());
        std::sort(v.begin(), v.end());
        return v;
    }

    // c -= q * b (componentwise mod p^N)
    void axpy(std::vector<u64>& c, const std::vector<u64>& b, u64 q) const {
        if (q == 0) return;
        for (int i = 0; i < dim_; ++i) c[i] = ctx_.sub(c[i], ctx_.mul(q, b[i]));
    }

    void normalize(std::vector<u64>& c, int row, int val) const {
        u64 unit_inv = ctx_.inverse(ctx_.shift_down(c[row], val));
        for (int i = 0; i < dim_; ++i) c[i] = ctx_.mul(c[i], unit_inv);
    }

    std::vector<u64> shadow(const std::vector<u64>& c, int row, int val) const {
        u64 s = ctx_.p_power(ctx_.precision() - val);
        std::vector<u64> sh(dim_, 0);
        for (int i = row + 1; i < dim_; ++i) sh[i] = ctx_.mul(c[i], s);
        return sh;
    }

    // Reduce each pivot-row entry of the other pivot columns to its canonical
    // residue below the pivot's lead power.
    void reduce_above() {
        for (const auto& [row, idx] : sorted_pivots()) {
            const Pivot& p = pivots_[idx];
            u64 lead = ctx_.p_power(p.val);
            for (auto& other : pivots_) {
                if (other.row == row || other.row > row) continue;
                u64 entry = other.col[row];
                u64 q = entry / lead;  // canonical residue division
                if (q) axpy(other.col, p.col, q);
            }
        }
    }

    PAdicContext ctx_;
    int dim_;
    std::vector<Pivot> pivots_;
    std::map<int, int> pivot_at_;
};

}  // namespace iwa
