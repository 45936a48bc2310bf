#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace microcav {

namespace detail {

/// Cholesky solve of A x = b for symmetric positive-definite A (row major,
/// n x n). A is overwritten with its factor, b with the solution. Returns
/// false when A is not positive definite.
inline bool cholesky_solve_inplace(std::vector<double>& A, std::vector<double>& b,
                                   std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = A[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
        if (!(d > 0.0)) return false;
        const double ljj = std::sqrt(d);
        A[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = A[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
            A[i * n + j] = s / ljj;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {  // forward
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= A[i * n + k] * b[k];
        b[i] = s / A[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {  // backward
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= A[k * n + ii] * b[k];
        b[ii] = s / A[ii * n + ii];
    }
    return true;
}

/// Inverse of a symmetric positive-semidefinite matrix by column-wise solves.
/// Near-singular input (a fit with an unidentifiable direction) is handled by
/// retrying with a progressively larger ridge: well-determined directions keep
/// accurate entries while degenerate ones come out huge but finite. Returns
/// empty only when the matrix is unusable at every ridge level.
inline std::vector<double> spd_inverse(const std::vector<double>& A, std::size_t n) {
    double max_diag = 0.0;
    for (std::size_t j = 0; j < n; ++j) max_diag = std::max(max_diag, A[j * n + j]);
    if (!(max_diag > 0.0)) return {};
    for (double jitter : {0.0, 1e-14, 1e-12, 1e-10, 1e-8}) {
        std::vector<double> inv(n * n, 0.0);
        bool ok = true;
        for (std::size_t c = 0; c < n && ok; ++c) {
            std::vector<double> fac = A;
            for (std::size_t j = 0; j < n; ++j) fac[j * n + j] += jitter * max_diag;
            std::vector<double> e(n, 0.0);
            e[c] = 1.0;
            ok = cholesky_solve_inplace(fac, e, n);
            for (std::size_t r = 0; r < n && ok; ++r) inv[r * n + c] = e[r];
        }
        if (ok) return inv;
    }
    return {};
}

}  // namespace detail

struct FitOptions {
    int max_iter = 120;
    double ftol = 1e-12;          // relative cost decrease considered converged
    double xtol = 1e-11;          // step size (relative to scales) considered converged
    double diff_step = 1e-6;      // central-difference step, relative to scale
    std::vector<double> scales;   // per-parameter magnitudes; default max(|p0|, 1e-12)
};

struct FitResult {
    std::vector<double> params;
    std::vector<double> covariance;  // row major p x p from (J^T J)^-1; empty if singular
    double sum_sq = 0.0;             // sum of squared residuals at the solution
    int iterations = 0;
    bool converged = false;

    /// 1-sigma uncertainty of parameter j, or +inf when not available.
    double sigma(std::size_t j) const {
        const std::size_t p = params.size();
        if (covariance.size() != p * p) return std::numeric_limits<double>::infinity();
        const double v = covariance[j * p + j];
        return v >= 0.0 ? std::sqrt(v) : std::numeric_limits<double>::infinity();
    }
};

/// Levenberg-Marquardt least squares for small parameter counts.
///
/// `fn(p, r)` fills r with the residual vector (weights already applied); the
/// residual length must not change between calls. The Jacobian is formed by
/// central differences with per-parameter steps diff_step * scales[j].
template <class F>
FitResult fit_least_squares(F&& fn, std::vector<double> p, FitOptions opt = {}) {
    const std::size_t np = p.size();
    if (opt.scales.size() != np) {
        double base = 0.0;
        for (std::size_t j = 0; j < np; ++j) base = std::max(base, std::abs(p[j]));
        if (base == 0.0) base = 1.0;
        opt.scales.assign(np, 0.0);
        for (std::size_t j = 0; j < np; ++j)
            opt.scales[j] = std::max(std::abs(p[j]), 1e-3 * base);
    }

    std::vector<double> r;
    fn(p, r);
    const std::size_t m = r.size();
    double cost = 0.0;
    for (double v : r) cost += v * v;

    // The normal equations are formed in scaled parameter space (p_j /
    // scales[j]); without this the dynamic range between parameters (e.g. an
    // amplitude of 1e8 against a phase of order 1) squares into the normal
    // matrix and double precision loses the small-gradient directions.
    std::vector<std::vector<double>> J(np, std::vector<double>(m));
    std::vector<double> rp(m), rm(m), jtj(np * np), g(np), step(np), ptry(np), rt(m);

    auto build_jacobian = [&](const std::vector<double>& at) {
        for (std::size_t j = 0; j < np; ++j) {
            const double h = opt.diff_step * opt.scales[j];
            ptry = at;
            ptry[j] = at[j] + h;
            fn(ptry, rp);
            ptry[j] = at[j] - h;
            fn(ptry, rm);
            // derivative with respect to the scaled parameter p_j / scales[j]
            const double inv2 = 1.0 / (2.0 * opt.diff_step);
            for (std::size_t i = 0; i < m; ++i) J[j][i] = (rp[i] - rm[i]) * inv2;
        }
    };

    FitResult out;
    double lambda = 1e-3;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        build_jacobian(p);
        double max_diag = 0.0;
        for (std::size_t a = 0; a < np; ++a) {
            g[a] = 0.0;
            for (std::size_t i = 0; i < m; ++i) g[a] += J[a][i] * r[i];
            for (std::size_t b = a; b < np; ++b) {
                double s = 0.0;
                for (std::size_t i = 0; i < m; ++i) s += J[a][i] * J[b][i];
                jtj[a * np + b] = s;
                jtj[b * np + a] = s;
            }
            max_diag = std::max(max_diag, jtj[a * np + a]);
        }
        if (max_diag <= 0.0) break;  // flat: nothing to do

        bool accepted = false;
        for (int tries = 0; tries < 16; ++tries) {
            std::vector<double> A = jtj;
            for (std::size_t a = 0; a < np; ++a)
                A[a * np + a] += lambda * std::max(jtj[a * np + a], 1e-10 * max_diag);
            for (std::size_t a = 0; a < np; ++a) step[a] = -g[a];
            if (!detail::cholesky_solve_inplace(A, step, np)) {
                lambda *= 10.0;
                continue;
            }
            for (std::size_t a = 0; a < np; ++a)
                ptry[a] = p[a] + step[a] * opt.scales[a];
            fn(ptry, rt);
            double ctry = 0.0;
            for (double v : rt) ctry += v * v;
            if (ctry < cost) {
                double max_step = 0.0;
                for (std::size_t a = 0; a < np; ++a)
                    max_step = std::max(max_step, std::abs(step[a]));
                const double drop = cost - ctry;
                p = ptry;
                r = rt;
                cost = ctry;
                lambda = std::max(lambda / 3.0, 1e-14);
                accepted = true;
                if (drop <= opt.ftol * std::max(cost, 1e-300) || max_step <= opt.xtol)
                    out.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            out.converged = true;  // no downhill step found: local minimum or plateau
            break;
        }
        if (out.converged) break;
    }

    out.params = std::move(p);
    out.sum_sq = cost;
    out.iterations = it + 1;
    // covariance from the undamped normal matrix at the solution, mapped back
    // to unscaled parameter units
    build_jacobian(out.params);
    for (std::size_t a = 0; a < np; ++a)
        for (std::size_t b = a; b < np; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += J[a][i] * J[b][i];
            jtj[a * np + b] = s;
            jtj[b * np + a] = s;
        }
    out.covariance = detail::spd_inverse(jtj, np);
    for (std::size_t a = 0; a < np && !out.covariance.empty(); ++a)
        for (std::size_t b = 0; b < np; ++b)
            out.covariance[a * np + b] *= opt.scales[a] * opt.scales[b];
    return out;
}

/// Golden-section minimizer for a unimodal 1-D function on [a, b].
template <class F>
double golden_section_min(F&& f, double a, double b, double tol_rel = 1e-4) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (std::abs(b - a) > tol_rel * (std::abs(a) + std::abs(b)) * 0.5) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace microcav
