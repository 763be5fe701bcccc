#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "stochacc/accumulator.hpp"
#include "stochacc/common.hpp"

namespace stochacc {

struct PowerLawFit {
    bool ok = false;
    std::string status;       // "ok", "insufficient_data", "nonpositive_data"
    Real exponent = 0.0;
    Real exponent_stderr = 0.0;
    Real intercept = 0.0;     // log-space intercept
    Real x_lo = 0.0, x_hi = 0.0;
    Real rms = 0.0;           // residual RMS in log-log
    int n_points = 0;
};

struct FitPoint {
    Real x;
    Real mean;
    Real se;
};

namespace detail {

/// Weighted least squares of log(mean) on log(x); weights from the relative
/// standard errors. Falls back to an unweighted fit when all errors vanish
/// (exact data), in which case the reported slope error comes out zero.
inline PowerLawFit fit_loglog(const std::vector<FitPoint>& pts) {
    PowerLawFit out;
    out.n_points = static_cast<int>(pts.size());
    if (pts.size() < 2) {
        out.status = "insufficient_data";
        return out;
    }
    bool weighted = false;
    for (const auto& p : pts)
        if (p.se > 0.0) weighted = true;

    Real sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : pts) {
        const Real lx = std::log(p.x);
        const Real ly = std::log(p.mean);
        Real sigma = weighted ? std::max(p.se / p.mean, 1e-12) : 1.0;
        const Real w = 1.0 / (sigma * sigma);
        sw += w;
        sx += w * lx;
        sy += w * ly;
        sxx += w * lx * lx;
        sxy += w * lx * ly;
    }
    const Real det = sw * sxx - sx * sx;
    if (det <= 0.0) {
        out.status = "insufficient_data";
        return out;
    }
    out.exponent = (sw * sxy - sx * sy) / det;
    out.intercept = (sxx * sy - sx * sxy) / det;
    Real ss = 0.0;
    for (const auto& p : pts) {
        const Real r = std::log(p.mean) - (out.intercept + out.exponent * std::log(p.x));
        ss += r * r;
    }
    out.rms = std::sqrt(ss / pts.size());
    out.exponent_stderr = weighted ? std::sqrt(sw / det)
                                   : ((pts.size() > 2) ? out.rms * std::sqrt(sw / det) : 0.0);
    out.x_lo = pts.front().x;
    out.x_hi = pts.back().x;
    out.ok = true;
    out.status = "ok";
    return out;
}

}  // namespace detail

inline std::vector<FitPoint> series_points(const EnsembleSeries& s, Observable obs) {
    std::vector<FitPoint> pts;
    const int j = s.obs_index(obs);
    if (j < 0) return pts;
    for (std::size_t k = 0; k < s.n_points(); ++k) {
        const Welford& w = s.cell(k, j);
        if (w.n < 2 || !(w.mean > 0.0)) continue;
        pts.push_back({s.grid().points[k], w.mean, w.std_error()});
    }
    return pts;
}

struct FitWindow {
    Real x_lo = 0.0;  // 0 means open
    Real x_hi = 0.0;
    static FitWindow last_decade() { return {}; }
    static FitWindow range(Real lo, Real hi) { return {lo, hi}; }
};

/// Power-law exponent of the checkpointed mean of `obs`. The default window
/// is the last decade of available data; an explicit window overrides it.
/// Requires at least 8 checkpoints in the window.
inline PowerLawFit fit_exponent(const EnsembleSeries& s, Observable obs,
                                FitWindow window = FitWindow::last_decade(),
                                int min_points = 8) {
    auto pts = series_points(s, obs);
    PowerLawFit bad;
    bad.status = "insufficient_data";
    if (pts.empty()) return bad;
    Real hi = (window.x_hi > 0.0) ? window.x_hi : pts.back().x;
    Real lo = (window.x_lo > 0.0) ? window.x_lo : hi / 10.0;
    std::vector<FitPoint> sel;
    for (const auto& p : pts)
        if (p.x >= lo * (1 - 1e-12) && p.x <= hi * (1 + 1e-12)) sel.push_back(p);
    if (static_cast<int>(sel.size()) < min_points) return bad;
    return detail::fit_loglog(sel);
}

struct CrossoverResult {
    bool found = false;
    std::string status;  // "ok", "no_crossover", "insufficient_data"
    Real n_star = 0.0;   // grid coordinate where the local slope settles
    Real tau_star = 0.0; // mean tau at that checkpoint (NaN when untracked)
};

/// Centered local log-log slope over 5 checkpoints.
inline std::vector<std::optional<Real>> local_slopes(const std::vector<FitPoint>& pts) {
    std::vector<std::optional<Real>> out(pts.size());
    for (std::size_t k = 2; k + 2 < pts.size(); ++k) {
        Real sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = k - 2; i <= k + 2; ++i) {
            Real lx = std::log(pts[i].x), ly = std::log(pts[i].mean);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        Real det = 5.0 * sxx - sx * sx;
        if (det > 0) out[k] = (5.0 * sxy - sx * sy) / det;
    }
    return out;
}

/// First checkpoint after which the local slope stays within `tol` of the
/// asymptotic exponent. When the series is asymptotic from the start the
/// first checkpoint is reported.
inline CrossoverResult detect_crossover(const EnsembleSeries& s, Observable obs,
                                        Real asymptotic_exponent, Real tol) {
    CrossoverResult out;
    auto pts = series_points(s, obs);
    if (pts.size() < 6) {
        out.status = "insufficient_data";
        return out;
    }
    auto slopes = local_slopes(pts);
    std::size_t first = 2, last = pts.size() - 3;
    std::size_t settle = pts.size();
    for (std::size_t k = last + 1; k-- > first;) {
        if (!slopes[k] || std::abs(*slopes[k] - asymptotic_exponent) > tol) break;
        settle = k;
    }
    if (settle > last) {
        out.status = "no_crossover";
        return out;
    }
    out.found = true;
    out.status = "ok";
    const std::size_t k = (settle == first) ? 0 : settle;  // asymptotic from the start
    out.n_star = pts[k].x;
    const int jt = s.obs_index(Observable::tau);
    if (jt >= 0) {
        // locate the checkpoint in the full grid to read its mean tau
        for (std::size_t g = 0; g < s.n_points(); ++g)
            if (s.grid().points[g] == pts[k].x) {
                out.tau_star = s.cell(g, jt).mean;
                break;
            }
    } else {
        out.tau_star = std::nan("");
    }
    return out;
}

/// Crossover located as the first checkpoint where the mean observable has
/// grown past `factor` times its initial value: the point where the flat
/// pre-asymptotic stretch merges into the common growth asymptote. For
/// <v_n^2> against a growth law A n^(1/3) this gives N* = (factor v0^2/A)^3,
/// i.e. the v0^6 crossover scale, directly from the data.
inline CrossoverResult crossover_by_growth(const EnsembleSeries& s, Observable obs,
                                           Real initial_value, Real factor = 2.0) {
    CrossoverResult out;
    const int j = s.obs_index(obs);
    const int jt = s.obs_index(Observable::tau);
    if (j < 0) {
        out.status = "insufficient_data";
        return out;
    }
    for (std::size_t k = 0; k < s.n_points(); ++k) {
        const Welford& w = s.cell(k, j);
        if (w.n < 2) continue;
        if (w.mean >= factor * initial_value) {
            out.found = true;
            out.status = "ok";
            out.n_star = s.grid().points[k];
            out.tau_star = (jt >= 0) ? s.cell(k, jt).mean : std::nan("");
            return out;
        }
    }
    out.status = "no_crossover";
    return out;
}

struct DecorrelationRow {
    Real v0 = 0.0;
    bool decays = false;
    Real m_star = 0.0;       // 1/|initial slope| of <e_m . e_0>
    Real slope_stderr = 0.0;
};

/// M*(v0) from the initial slope of the direction autocorrelation, fitted
/// linearly over the first decade of lags. The direction recorded at
/// collision n has undergone n-1 kicks, so the lag is n-1 and the n=1
/// checkpoint (identically 1, zero variance) anchors the intercept.
inline DecorrelationRow direction_decorrelation(const EnsembleSeries& s, Real v0,
                                                Real lag_hi = 10.0) {
    DecorrelationRow row;
    row.v0 = v0;
    const int j = s.obs_index(Observable::e_dot_e0);
    if (j < 0) return row;
    Real sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t k = 0; k < s.n_points(); ++k) {
        const Real m = s.grid().points[k] - 1.0;
        if (m > lag_hi) break;
        const Welford& w = s.cell(k, j);
        if (w.n < 2) continue;
        if (m > 1.0 && w.mean < 0.5) break;  // past the knee it is no longer "initial"
        const Real se = std::max(w.std_error(), 1e-9);
        const Real wt = 1.0 / (se * se);
        sw += wt;
        sx += wt * m;
        sy += wt * w.mean;
        sxx += wt * m * m;
        sxy += wt * m * w.mean;
        ++n;
    }
    if (n < 2) return row;
    const Real det = sw * sxx - sx * sx;
    if (det <= 0) return row;
    const Real slope = (sw * sxy - sx * sy) / det;
    row.slope_stderr = std::sqrt(sw / det);
    if (slope < -1e-12) {
        row.decays = true;
        row.m_star = 1.0 / (-slope);
    }
    return row;
}

/// Log-log slope of a small (x, y) table; used for the crossover and
/// decorrelation scaling laws where only a handful of points exist.
inline PowerLawFit fit_loglog_table(const std::vector<Real>& x, const std::vector<Real>& y) {
    std::vector<FitPoint> pts;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0 && y[i] > 0) pts.push_back({x[i], y[i], 0.0});
    return detail::fit_loglog(pts);
}

/// Two-sample Kolmogorov-Smirnov distance (tie-safe).
inline Real ks_distance(std::vector<Real> a, std::vector<Real> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    Real d = 0.0;
    while (i < a.size() && j < b.size()) {
        const Real x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        const Real fa = static_cast<Real>(i) / a.size();
        const Real fb = static_cast<Real>(j) / b.size();
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

}  // namespace stochacc
