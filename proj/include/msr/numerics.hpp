#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "msr/errors.hpp"

namespace msr {

using Vec = std::vector<double>;

// Dense row-major matrix. Deliberately minimal: the chains and LPs handled
// here have at most a few hundred states, so O(n^3) dense algorithms are fine.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline double dot(const Vec& a, const Vec& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline Vec mat_vec(const Matrix& m, const Vec& x) {
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) y[i] += m(i, j) * x[j];
    return y;
}

// Solves A x = b by Gaussian elimination with partial pivoting, followed by
// one step of iterative refinement. Throws SingularSystem when a pivot
// column is numerically zero relative to the row scale.
inline Vec solve_linear(const Matrix& a, const Vec& b) {
    if (a.rows != a.cols || a.rows != b.size())
        throw InvalidInput("solve_linear: dimension mismatch");
    const std::size_t n = a.rows;
    if (n == 0) return {};

    double scale = 0.0;
    for (double v : a.data) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) throw SingularSystem("solve_linear: zero matrix");

    auto eliminate = [&](const Vec& rhs) {
        Matrix m = a;
        Vec x = rhs;
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        for (std::size_t col = 0; col < n; ++col) {
            std::size_t piv = col;
            for (std::size_t r = col + 1; r < n; ++r)
                if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
            if (std::abs(m(piv, col)) <= 1e-12 * scale)
                throw SingularSystem("solve_linear: singular to working precision");
            if (piv != col) {
                for (std::size_t j = 0; j < n; ++j) std::swap(m(piv, j), m(col, j));
                std::swap(x[piv], x[col]);
            }
            for (std::size_t r = col + 1; r < n; ++r) {
                double f = m(r, col) / m(col, col);
                if (f == 0.0) continue;
                for (std::size_t j = col; j < n; ++j) m(r, j) -= f * m(col, j);
                x[r] -= f * x[col];
            }
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = x[i];
            for (std::size_t j = i + 1; j < n; ++j) s -= m(i, j) * x[j];
            x[i] = s / m(i, i);
        }
        return x;
    };

    Vec x = eliminate(b);
    // One refinement pass recovers a couple of digits on ill-conditioned
    // chains without needing extended precision.
    Vec r(n);
    Vec ax = mat_vec(a, x);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ax[i];
    try {
        Vec dx = eliminate(r);
        for (std::size_t i = 0; i < n; ++i) x[i] += dx[i];
    } catch (const SingularSystem&) {
        // refinement is best-effort; keep the unrefined solution
    }
    return x;
}

// ---------------------------------------------------------------------------
// Linear programming: maximize c.x subject to Aeq x = beq, Aub x <= bub,
// x >= 0. Two-phase dense simplex with Bland's rule, which makes the solve
// deterministic (identical pivots for identical input bytes) and cycle-free.
// ---------------------------------------------------------------------------

struct LpProblem {
    Vec objective;                       // maximize objective . x
    std::vector<Vec> eq_lhs;             // equality rows
    Vec eq_rhs;
    std::vector<Vec> ub_lhs;             // <= rows
    Vec ub_rhs;
};

struct LpSolution {
    double value = 0.0;
    Vec x;
    std::vector<std::size_t> support;    // structural vars with x[j] > tol
};

namespace detail {

// Pivots `tab` (m rows, each `width` long, last entry = rhs) so that basic
// variable of `row` becomes `col`. Objective row is `obj`.
inline void lp_pivot(std::vector<Vec>& tab, Vec& obj, std::size_t row, std::size_t col) {
    const std::size_t width = tab[row].size();
    double p = tab[row][col];
    for (std::size_t j = 0; j < width; ++j) tab[row][j] /= p;
    for (std::size_t r = 0; r < tab.size(); ++r) {
        if (r == row) continue;
        double f = tab[r][col];
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < width; ++j) tab[r][j] -= f * tab[row][j];
    }
    double f = obj[col];
    if (f != 0.0)
        for (std::size_t j = 0; j < width; ++j) obj[j] -= f * tab[row][j];
}

// Runs the simplex loop on the tableau, minimizing the current objective row.
// `allowed` marks columns eligible to enter. Returns false on unboundedness.
inline bool lp_iterate(std::vector<Vec>& tab, Vec& obj, std::vector<std::size_t>& basis,
                       const std::vector<bool>& allowed) {
    const std::size_t width = obj.size();
    const std::size_t rhs = width - 1;
    const double tol = 1e-9;
    for (;;) {
        // Bland: smallest-index column with negative reduced cost.
        std::size_t enter = rhs;
        for (std::size_t j = 0; j < rhs; ++j)
            if (allowed[j] && obj[j] < -tol) { enter = j; break; }
        if (enter == rhs) return true;  // optimal
        std::size_t leave = tab.size();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < tab.size(); ++r) {
            if (tab[r][enter] <= 1e-10) continue;
            double ratio = tab[r][rhs] / tab[r][enter];
            if (ratio < best - 1e-12 ||
                (ratio < best + 1e-12 && (leave == tab.size() || basis[r] < basis[leave]))) {
                best = ratio;
                leave = r;
            }
        }
        if (leave == tab.size()) return false;  // unbounded
        lp_pivot(tab, obj, leave, enter);
        basis[leave] = enter;
    }
}

}  // namespace detail

inline LpSolution lp_maximize(const LpProblem& p) {
    const std::size_t n = p.objective.size();
    const std::size_t m_eq = p.eq_lhs.size();
    const std::size_t m_ub = p.ub_lhs.size();
    const std::size_t m = m_eq + m_ub;
    if (p.eq_rhs.size() != m_eq || p.ub_rhs.size() != m_ub)
        throw InvalidInput("lp_maximize: rhs size mismatch");
    for (const Vec& row : p.eq_lhs)
        if (row.size() != n) throw InvalidInput("lp_maximize: eq row size mismatch");
    for (const Vec& row : p.ub_lhs)
        if (row.size() != n) throw InvalidInput("lp_maximize: ub row size mismatch");

    // Columns: n structural, m_ub slacks, m artificials, then rhs.
    const std::size_t slack0 = n;
    const std::size_t art0 = n + m_ub;
    const std::size_t width = n + m_ub + m + 1;
    const std::size_t rhs = width - 1;

    std::vector<Vec> tab(m, Vec(width, 0.0));
    for (std::size_t r = 0; r < m_eq; ++r) {
        for (std::size_t j = 0; j < n; ++j) tab[r][j] = p.eq_lhs[r][j];
        tab[r][rhs] = p.eq_rhs[r];
    }
    for (std::size_t r = 0; r < m_ub; ++r) {
        std::size_t tr = m_eq + r;
        for (std::size_t j = 0; j < n; ++j) tab[tr][j] = p.ub_lhs[r][j];
        tab[tr][slack0 + r] = 1.0;
        tab[tr][rhs] = p.ub_rhs[r];
    }
    // Nonnegative rhs is required before installing the artificial basis.
    for (std::size_t r = 0; r < m; ++r)
        if (tab[r][rhs] < 0.0)
            for (std::size_t j = 0; j < width; ++j) tab[r][j] = -tab[r][j];
    std::vector<std::size_t> basis(m);
    for (std::size_t r = 0; r < m; ++r) {
        tab[r][art0 + r] = 1.0;
        basis[r] = art0 + r;
    }

    // Phase 1: minimize sum of artificials.
    Vec obj(width, 0.0);
    for (std::size_t r = 0; r < m; ++r) obj[art0 + r] = 1.0;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < width; ++j) obj[j] -= tab[r][j];
    std::vector<bool> allowed(width, true);
    if (!detail::lp_iterate(tab, obj, basis, allowed))
        throw LpInfeasible("lp_maximize: phase 1 unbounded (internal)");
    if (-obj[rhs] > 1e-7)
        throw LpInfeasible("lp_maximize: constraints are infeasible");

    // Drive any artificial still in the basis out, or drop its (redundant) row.
    for (std::size_t r = 0; r < tab.size(); ++r) {
        if (basis[r] < art0) continue;
        std::size_t enter = rhs;
        for (std::size_t j = 0; j < art0; ++j)
            if (std::abs(tab[r][j]) > 1e-9) { enter = j; break; }
        if (enter == rhs) {
            tab.erase(tab.begin() + static_cast<std::ptrdiff_t>(r));
            basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(r));
            --r;
        } else {
            detail::lp_pivot(tab, obj, r, enter);
            basis[r] = enter;
        }
    }

    // Phase 2: maximize c.x == minimize -c.x, artificials locked out.
    Vec obj2(width, 0.0);
    for (std::size_t j = 0; j < n; ++j) obj2[j] = -p.objective[j];
    for (std::size_t r = 0; r < tab.size(); ++r) {
        double f = obj2[basis[r]];
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < width; ++j) obj2[j] -= f * tab[r][j];
    }
    for (std::size_t j = art0; j < rhs; ++j) allowed[j] = false;
    if (!detail::lp_iterate(tab, obj2, basis, allowed))
        throw LpUnbounded("lp_maximize: objective is unbounded");

    LpSolution sol;
    sol.x.assign(n, 0.0);
    for (std::size_t r = 0; r < tab.size(); ++r)
        if (basis[r] < n) sol.x[basis[r]] = tab[r][rhs];
    sol.value = dot(p.objective, sol.x);
    for (std::size_t j = 0; j < n; ++j)
        if (sol.x[j] > 1e-12) sol.support.push_back(j);
    return sol;
}

// ---------------------------------------------------------------------------
// CTMC stationary distribution. `g` is an N x N generator: rows sum to zero,
// off-diagonal entries nonnegative. Solves pi G = 0, sum(pi) = 1 by replacing
// the last balance equation with the normalization row.
// ---------------------------------------------------------------------------
inline Vec stationary_distribution(const Matrix& g) {
    if (g.rows != g.cols) throw InvalidInput("stationary_distribution: matrix not square");
    const std::size_t n = g.rows;
    if (n == 0) throw InvalidInput("stationary_distribution: empty generator");
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double v = g(i, j);
            scale = std::max(scale, std::abs(v));
            row_sum += v;
            if (i != j && v < -1e-12) throw InvalidInput("stationary_distribution: negative rate");
        }
        if (std::abs(row_sum) > 1e-9 * std::max(1.0, scale))
            throw InvalidInput("stationary_distribution: generator rows must sum to zero");
    }
    if (n == 1) return {1.0};

    // System rows are columns of G (balance for each state); the last one is
    // redundant and becomes the normalization constraint.
    Matrix a(n, n);
    Vec b(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = g(j, i);
    for (std::size_t j = 0; j < n; ++j) a(n - 1, j) = 1.0;
    b[n - 1] = 1.0;

    Vec pi;
    try {
        pi = solve_linear(a, b);
    } catch (const SingularSystem&) {
        throw ReducibleChain("stationary_distribution: chain is reducible (singular balance system)");
    }
    double lo = *std::min_element(pi.begin(), pi.end());
    if (lo < -1e-9 || lo < 1e-12)
        throw ReducibleChain("stationary_distribution: chain is not irreducible (zero-mass state)");
    // Renormalize and verify the residual of the full balance system.
    double s = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (double& v : pi) v /= s;
    double resid = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < n; ++i) col += pi[i] * g(i, j);
        resid = std::max(resid, std::abs(col));
    }
    if (resid > 1e-9 * std::max(1.0, scale))
        throw SingularSystem("stationary_distribution: balance residual too large");
    return pi;
}

// ---------------------------------------------------------------------------
// Erlang-C: probability that an arriving job must queue in an M/M/k with
// per-server utilization rho. Real-valued k is handled by linear
// interpolation between floor(k) and ceil(k) at the same rho; k in (0,1)
// blends toward the degenerate zero-server system (P_Q = 1).
// rho >= 1 saturates to 1.0 and sets *saturated when provided.
// ---------------------------------------------------------------------------
inline double erlang_c(double k, double rho, bool* saturated = nullptr) {
    if (saturated) *saturated = false;
    if (!(k > 0.0) || !std::isfinite(k)) throw InvalidInput("erlang_c: k must be positive");
    if (rho < 0.0 || !std::isfinite(rho)) throw InvalidInput("erlang_c: rho must be nonnegative");
    if (rho >= 1.0) {
        if (saturated) *saturated = true;
        return 1.0;
    }
    if (rho == 0.0) return 0.0;

    auto c_integer = [rho](std::size_t servers) -> double {
        if (servers == 0) return 1.0;
        double a = static_cast<double>(servers) * rho;  // offered load
        // Erlang-B recursion, then convert; stable for all practical k.
        double b = 1.0;
        for (std::size_t j = 1; j <= servers; ++j)
            b = a * b / (static_cast<double>(j) + a * b);
        double kk = static_cast<double>(servers);
        return kk * b / (kk - a * (1.0 - b));
    };

    double fl = std::floor(k);
    double frac = k - fl;
    auto lo = static_cast<std::size_t>(fl);
    if (frac < 1e-12) return c_integer(lo);
    if (frac > 1.0 - 1e-12) return c_integer(lo + 1);
    return (1.0 - frac) * c_integer(lo) + frac * c_integer(lo + 1);
}

}  // namespace msr
