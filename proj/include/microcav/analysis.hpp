#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "microcav/fit.hpp"
#include "microcav/physics.hpp"
#include "microcav/spectral.hpp"
#include "microcav/transit.hpp"

namespace microcav {

// ---------------------------------------------------------------------------
// transmission -> dispersive shift inversion
// ---------------------------------------------------------------------------

/// Per-sample solutions of the transmission quadratic.
///
/// With scattering tied to the shift (kappa_extra = eta * delta), each
/// transmission value admits at most two shifts: a lower branch before the
/// transmission turning point and an upper branch past it. `branch_point` is
/// the shift where they meet. Samples whose transmission exceeds the turning
/// value (possible with noise) have negative discriminant and are flagged
/// ambiguous; both branches are then clamped to the branch point.
struct ShiftInversion {
    std::vector<double> lower;   // clipped to [0, branch_point]
    std::vector<double> upper;   // unclipped above the branch point
    std::vector<double> disc;    // quadratic discriminant
    double branch_point = 0.0;
    double ambiguous_fraction = 0.0;
};

namespace detail {

/// Fixed numbers of the inversion quadratic for one probe configuration.
struct InversionModel {
    double kappa, delta, u0, ks, eta, a_q, b_q, dstar, w0, lam;

    explicit InversionModel(const ProbeSetup& s)
        : kappa(s.mode.kappa),
          delta(s.detuning),
          u0(s.coupling.dispersive_shift),
          ks(s.coupling.scattering_loss),
          w0(s.mode.waist),
          lam(s.mode.wavelength) {
        if (!(u0 > 0.0))
            throw std::invalid_argument("inversion requires a positive dispersive shift");
        eta = ks / u0;
        a_q = 1.0 + eta * eta;
        b_q = 2.0 * (kappa * eta + delta);
        dstar = -b_q / (2.0 * a_q);
        if (!(dstar > 0.0))
            throw std::invalid_argument(
                "inversion requires red detuning (branch point must be positive)");
    }

    double lorentz(double d) const {
        return lorentzian_transmission(delta + d, kappa, eta * d);
    }

    /// Reflect a shift past the branch point back onto the lower branch.
    double fold(double d) const { return d <= dstar ? d : 2.0 * dstar - d; }

    double discriminant(double T) const {
        const double Tc = std::max(T, 1e-12);
        const double cq = kappa * kappa + delta * delta - kappa * kappa / Tc;
        return b_q * b_q - 4.0 * a_q * cq;
    }
};

}  // namespace detail

inline ShiftInversion invert_to_shift(const ProbeSetup& setup,
                                      const std::vector<double>& transmission) {
    const detail::InversionModel M(setup);
    const std::size_t n = transmission.size();
    ShiftInversion out;
    out.branch_point = M.dstar;
    out.lower.resize(n);
    out.upper.resize(n);
    out.disc.resize(n);
    std::size_t n_amb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double disc = M.discriminant(transmission[i]);
        out.disc[i] = disc;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            out.lower[i] = std::clamp((-M.b_q - sq) / (2.0 * M.a_q), 0.0, M.dstar);
            out.upper[i] = (-M.b_q + sq) / (2.0 * M.a_q);
        } else {
            out.lower[i] = M.dstar;
            out.upper[i] = M.dstar;
            ++n_amb;
        }
    }
    out.ambiguous_fraction = n ? static_cast<double>(n_amb) / static_cast<double>(n) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// transit detection
// ---------------------------------------------------------------------------

struct DetectionResult {
    std::vector<std::pair<std::size_t, std::size_t>> windows;  // inclusive [a, b]
    double baseline = 0.0;
    double noise = 0.0;
};

namespace detail {

inline double median_inplace(std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        const double lower =
            *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lower);
    }
    return m;
}

}  // namespace detail

/// Maximal disjoint windows where the transmission departs from baseline.
///
/// Baseline and noise come from the first and last tenth of the record
/// (median and scaled MAD), so a transit in the middle does not bias them.
/// Runs of threshold crossings separated by less than a twentieth of the
/// record merge into one event; each window is padded by pad_factor times
/// the run length so the envelope tails survive for fitting.
inline DetectionResult detect_transits(const std::vector<double>& transmission,
                                       double threshold_sigma = 5.0,
                                       double pad_factor = 2.5) {
    DetectionResult out;
    const std::size_t n = transmission.size();
    if (n < 4) return out;
    const std::size_t m = std::max<std::size_t>(10, n / 10);

    std::vector<double> ends;
    ends.reserve(2 * std::min(m, n));
    for (std::size_t i = 0; i < std::min(m, n); ++i) ends.push_back(transmission[i]);
    for (std::size_t i = n - std::min(m, n); i < n; ++i) ends.push_back(transmission[i]);
    std::vector<double> tmp = ends;
    out.baseline = detail::median_inplace(tmp);
    std::vector<double> dev(ends.size());
    for (std::size_t i = 0; i < ends.size(); ++i)
        dev[i] = std::abs(ends[i] - out.baseline);
    out.noise = 1.4826 * detail::median_inplace(dev);

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(transmission[i] - out.baseline) > threshold_sigma * out.noise)
            idx.push_back(i);
    if (idx.empty()) return out;

    const std::size_t gap = std::max<std::size_t>(1, n / 20);
    std::vector<std::pair<std::size_t, std::size_t>> wins;
    std::size_t run_start = idx[0], prev = idx[0];
    auto flush = [&](std::size_t a, std::size_t b) {
        const std::size_t len = b - a + 1;
        const std::size_t pad = static_cast<std::size_t>(pad_factor * static_cast<double>(len));
        const std::size_t lo = a > pad ? a - pad : 0;
        const std::size_t hi = std::min(n - 1, b + pad);
        wins.emplace_back(lo, hi);
    };
    for (std::size_t k = 1; k < idx.size(); ++k) {
        if (idx[k] - prev > gap) {
            flush(run_start, prev);
            run_start = idx[k];
        }
        prev = idx[k];
    }
    flush(run_start, prev);

    out.windows.push_back(wins[0]);
    for (std::size_t k = 1; k < wins.size(); ++k) {
        if (wins[k].first <= out.windows.back().second)
            out.windows.back().second = std::max(wins[k].second, out.windows.back().second);
        else
            out.windows.push_back(wins[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// sideband scan calibration
// ---------------------------------------------------------------------------

struct CalibrationResult {
    double kappa = 0.0;          // angular half width at half maximum
    double finesse = 0.0;
    double scan_scale = 0.0;     // scan units per Hz
    double residual_rms = 0.0;
    double carrier_position = 0.0;
    double sideband_positions[2] = {0.0, 0.0};
    bool converged = false;
};

/// Linewidth and finesse from a sideband-calibrated scan.
///
/// Finds the carrier and the two modulation sidebands, then fits all three
/// Lorentzians jointly in raw scan coordinates. The known sideband spacing
/// turns scan units into frequency; fitting the triplet together keeps the
/// overlapping tails from biasing the width. The result is invariant under
/// any positive affine scaling of the transmission axis.
inline CalibrationResult calibrate_and_fit_scan(const FrequencyScan& scan, double fsr) {
    const std::vector<double>& x = scan.position;
    const std::vector<double>& T = scan.transmission;
    const std::size_t n = T.size();
    if (n < 32) throw std::invalid_argument("scan too short to calibrate");
    if (!(scan.sideband_hz > 0.0))
        throw std::invalid_argument("scan needs a positive sideband frequency");
    if (!(fsr > 0.0)) throw std::invalid_argument("free spectral range must be positive");

    const int win = std::max<int>(3, static_cast<int>(n / 200));
    const std::vector<double> s = moving_average(T, win);

    std::vector<double> tmp = s;
    const double med = detail::median_inplace(tmp);
    const double smax = *std::max_element(s.begin(), s.end());
    const double height_gate = med + 0.25 * (smax - med);

    // local maxima of the smoothed scan, grouped within two smoothing windows
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 2; i + 2 < n; ++i) {
        if (s[i] >= s[i - 1] && s[i] >= s[i + 1] && s[i] > height_gate) {
            if (!groups.empty() && i - groups.back().back() <= 2 * static_cast<std::size_t>(win))
                groups.back().push_back(i);
            else
                groups.push_back({i});
        }
    }
    struct Peak {
        double pos, height;
    };
    std::vector<Peak> peaks;
    const double dx = x[1] - x[0];
    for (const auto& g : groups) {
        std::size_t i = g[0];
        for (std::size_t j : g)
            if (s[j] > s[i]) i = j;
        double shift = 0.0;
        if (i > 0 && i + 1 < n) {
            const double den = s[i - 1] - 2.0 * s[i] + s[i + 1];
            if (den != 0.0) shift = 0.5 * (s[i - 1] - s[i + 1]) / den;
        }
        peaks.push_back({x[i] + shift * dx, s[i]});
    }
    if (peaks.size() < 3)
        throw std::invalid_argument("calibration needs the carrier and both sidebands; found " +
                                    std::to_string(peaks.size()) + " peak(s)");

    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.height > b.height; });
    const Peak carrier = peaks[0];
    Peak sb_lo = peaks[1], sb_hi = peaks[2];
    if (sb_lo.pos > sb_hi.pos) std::swap(sb_lo, sb_hi);

    tmp = T;
    const double off0 = detail::median_inplace(tmp);
    const double ac0 = carrier.height - off0;
    const double as0 = 0.5 * (sb_lo.height + sb_hi.height) - off0;
    const double gx0 = 0.25 * std::abs(sb_hi.pos - sb_lo.pos) / 2.0;

    auto resid = [&](const std::vector<double>& p, std::vector<double>& r) {
        const double off = p[0], ac = p[1], ap = p[2], am = p[3];
        const double x0 = p[4], xp = p[5], xm = p[6], gx = p[7];
        const double g2 = gx * gx;
        r.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double dc = x[i] - x0, dp = x[i] - xp, dm = x[i] - xm;
            r[i] = off + ac * g2 / (g2 + dc * dc) + ap * g2 / (g2 + dp * dp) +
                   am * g2 / (g2 + dm * dm) - T[i];
        }
    };
    const double span_x = x.back() - x.front();
    FitOptions opt;
    opt.max_iter = 200;
    opt.ftol = 1e-12;
    const double amp_scale = std::max(std::abs(ac0), 1e-3);
    opt.scales = {std::max(std::abs(off0), 0.05 * amp_scale),
                  amp_scale,
                  std::max(std::abs(as0), 0.1 * amp_scale),
                  std::max(std::abs(as0), 0.1 * amp_scale),
                  0.05 * span_x,
                  0.05 * span_x,
                  0.05 * span_x,
                  std::max(gx0, 1e-3 * span_x)};
    FitResult fr = fit_least_squares(
        resid, {off0, ac0, as0, as0, carrier.pos, sb_hi.pos, sb_lo.pos, gx0}, opt);

    CalibrationResult out;
    out.converged = fr.converged;
    out.carrier_position = fr.params[4];
    out.sideband_positions[0] = std::min(fr.params[5], fr.params[6]);
    out.sideband_positions[1] = std::max(fr.params[5], fr.params[6]);
    out.scan_scale = std::abs(fr.params[5] - fr.params[6]) / (2.0 * scan.sideband_hz);
    if (!(out.scan_scale > 0.0))
        throw std::invalid_argument("calibration collapsed: sidebands coincide");
    out.kappa = 2.0 * pi * std::abs(fr.params[7]) / out.scan_scale;
    out.finesse = fsr / (out.kappa / pi);
    out.residual_rms = std::sqrt(fr.sum_sq / static_cast<double>(n));
    return out;
}

// ---------------------------------------------------------------------------
// velocity extraction
// ---------------------------------------------------------------------------

struct TransitEstimate {
    double vx = std::numeric_limits<double>::quiet_NaN();
    double vx_sigma = std::numeric_limits<double>::quiet_NaN();
    bool vx_available = false;
    std::string vx_note;

    double vz = std::numeric_limits<double>::quiet_NaN();
    double vz_sigma = std::numeric_limits<double>::quiet_NaN();
    bool vz_available = false;
    std::string vz_note;

    bool modulated = false;        // fringe model preferred over plain envelope
    int fringe_maxima = 0;         // modulation maxima under the fitted envelope
    double shift_amplitude = 0.0;  // fitted peak dispersive shift, rad/s
    double center_time = 0.0;      // fitted closest approach, s
    double chi2_reduced = 0.0;
    double peak_shift_over_kappa = 0.0;
    double ambiguous_fraction = 0.0;
    double snr = 0.0;

    std::vector<double> resolved_shift;  // model-guided branch-resolved shift, rad/s
};

namespace detail {

struct Extractor {
    const InversionModel& M;
    const std::vector<double>& t;
    const std::vector<double>& T;
    double noise_sigma;

    std::size_t n;
    double fs, span, fmin, tm = 0.0;
    ShiftInversion inv;
    std::vector<double> w;   // starter weights
    std::vector<double> sm;  // smoothed fold image
    double Emax = 0.0, mu = 0.0, v0 = 0.0, A0 = 0.0;

    Extractor(const InversionModel& model, const ProbeSetup& setup,
              const std::vector<double>& time, const std::vector<double>& trans,
              double sigma)
        : M(model), t(time), T(trans), noise_sigma(sigma) {
        n = t.size();
        if (n < 64) throw std::invalid_argument("window too short to fit a transit");
        fs = 1.0 / (t[1] - t[0]);
        span = t.back() - t.front();
        fmin = 3.0 / span;
        inv = invert_to_shift(setup, T);

        w.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (inv.disc[i] > 0.0) {
                const double Tc = std::max(T[i], 1e-12);
                const double sd = noise_sigma * M.kappa * M.kappa / (Tc * Tc);
                w[i] = inv.disc[i] / (sd * sd);
            } else {
                w[i] = 0.0;
            }
        }

        const int win = std::max<int>(3, static_cast<int>(std::lround(25.0 * fs / 100e6)));
        sm = moving_average(inv.lower, win);
        double esum = 0.0, emean = 0.0, evar = 0.0;
        Emax = 1e-12;
        for (double v : sm) Emax = std::max(Emax, v);
        for (std::size_t i = 0; i < n; ++i) {
            const double e = sm[i] > 0.2 * Emax ? sm[i] : 0.0;
            esum += e;
            emean += t[i] * e;
        }
        if (esum > 0.0) {
            mu = emean / esum;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = sm[i] > 0.2 * Emax ? sm[i] : 0.0;
                evar += (t[i] - mu) * (t[i] - mu) * e;
            }
            evar /= esum;
        } else {  // nothing above the envelope gate: start from the window middle
            mu = 0.5 * (t.front() + t.back());
            evar = span * span / 16.0;
        }
        const double var_floor = (2.0 / fs) * (2.0 / fs);
        v0 = M.w0 / (2.0 * std::sqrt(std::max(evar, var_floor)));

        A0 = 2.0 * Emax;
        for (std::size_t i = 0; i < n; ++i) {
            if (inv.disc[i] > 0.0) A0 = std::max(A0, inv.upper[i]);
            A0 = std::max(A0, inv.lower[i]);
        }
        tm = mu;
    }

    // p = {A, tc, v, f, phi}
    double model5(const std::vector<double>& p, double tv) const {
        const double g = std::exp(-2.0 * p[2] * p[2] * (tv - p[1]) * (tv - p[1]) /
                                  (M.w0 * M.w0));
        return p[0] * g * (1.0 + std::cos(2.0 * pi * p[3] * (tv - tm) + p[4])) / 2.0;
    }

    // p = {A, tc, v}
    double model3(const std::vector<double>& p, double tv) const {
        return p[0] * std::exp(-2.0 * p[2] * p[2] * (tv - p[1]) * (tv - p[1]) /
                               (M.w0 * M.w0));
    }

    std::vector<double> lm_scales(const std::vector<double>& p) const {
        std::vector<double> s(p.size());
        s[0] = std::max(std::abs(p[0]), 1e-3 * A0);
        s[1] = std::max(0.05 * span, 2.0 / fs);
        s[2] = std::max(std::abs(p[2]), 0.5);
        if (p.size() == 5) {
            s[3] = std::max(std::abs(p[3]), 1.0 / span);
            s[4] = 1.0;
        }
        return s;
    }

    FitOptions lm_options(const std::vector<double>& p, int max_iter) const {
        FitOptions o;
        o.max_iter = max_iter;
        o.ftol = 1e-9;
        o.xtol = 1e-10;
        o.scales = lm_scales(p);
        return o;
    }

    struct IrlsOutcome {
        FitResult fit;
        std::size_t n_active = 0;
    };

    /// Three rounds of reweighted fold-image fitting. Weights come from the
    /// current model (where would this trajectory produce usable samples),
    /// with a guard band below the branch point and the requirement that the
    /// data sample itself was unambiguous.
    template <class Model>
    IrlsOutcome irls(Model&& model, std::vector<double> p) const {
        IrlsOutcome out;
        std::vector<double> sw(n);
        for (int round = 0; round < 3; ++round) {
            std::size_t active = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dm = model(p, t[i]);
                const double Tm = M.lorentz(dm);
                const double discm = M.discriminant(Tm);
                double wi = 0.0;
                if (discm > 0.0 && M.fold(dm) < 0.90 * M.dstar && inv.disc[i] > 0.0) {
                    const double sd = noise_sigma * M.kappa * M.kappa / (Tm * Tm);
                    wi = discm / (sd * sd);
                }
                sw[i] = std::sqrt(wi);
                if (wi > 0.0) ++active;
            }
            auto resid = [&](const std::vector<double>& q, std::vector<double>& r) {
                r.resize(n);
                for (std::size_t i = 0; i < n; ++i)
                    r[i] = sw[i] * (M.fold(model(q, t[i])) - inv.lower[i]);
            };
            out.fit = fit_least_squares(resid, p, lm_options(p, 60));
            p = out.fit.params;
            out.n_active = active;
        }
        return out;
    }

    /// Full modulated fit for one fringe-frequency candidate.
    IrlsOutcome fit_modulated(double fc) const {
        std::vector<double> detr(n);
        for (std::size_t i = 0; i < n; ++i) detr[i] = inv.lower[i] - sm[i];
        const double ph0 = dft_phase(detr, t, fc, mu);

        // stage 1: joint fit with data-based starter weights pins f and phi
        std::vector<double> sw(n);
        for (std::size_t i = 0; i < n; ++i) sw[i] = std::sqrt(w[i]);
        auto resid5 = [&](const std::vector<double>& q, std::vector<double>& r) {
            r.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                r[i] = sw[i] * (M.fold(model5(q, t[i])) - inv.lower[i]);
        };
        std::vector<double> p1{A0, mu, v0, fc, ph0};
        FitResult s1 = fit_least_squares(resid5, p1, lm_options(p1, 60));
        const double A1 = s1.params[0], tc1 = s1.params[1], v1 = s1.params[2];
        const double f1 = s1.params[3], ph1 = s1.params[4];

        // stage 2: divide out the fitted modulation, fit the smooth envelope
        std::vector<double> m_t(n);
        for (std::size_t i = 0; i < n; ++i)
            m_t[i] = (1.0 + std::cos(2.0 * pi * f1 * (t[i] - tm) + ph1)) / 2.0;
        std::vector<double> p_env{std::max(A1, A0), tc1, v1};
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<double> te, e_obs, swe;
            for (std::size_t i = 0; i < n; ++i) {
                const double pred = model3(p_env, t[i]) * m_t[i];
                if (m_t[i] > 0.25 && pred < 0.85 * M.dstar && w[i] > 0.0) {
                    te.push_back(t[i]);
                    e_obs.push_back(inv.lower[i] / m_t[i]);
                    swe.push_back(std::sqrt(w[i] * m_t[i] * m_t[i]));
                }
            }
            if (te.size() < 20) break;
            auto resid_env = [&](const std::vector<double>& q, std::vector<double>& r) {
                r.resize(te.size());
                for (std::size_t i = 0; i < te.size(); ++i)
                    r[i] = swe[i] * (model3(q, te[i]) - e_obs[i]);
            };
            FitResult fe = fit_least_squares(resid_env, p_env, lm_options(p_env, 40));
            p_env = fe.params;
        }

        // stage 3: reweighted joint fits from three starts, keep the cheapest
        auto m5 = [this](const std::vector<double>& q, double tv) { return model5(q, tv); };
        const std::vector<std::vector<double>> starts = {
            {p_env[0], p_env[1], p_env[2], f1, ph1},
            {A0, mu, v0, f1, ph1},
            {A1, tc1, v1, f1, ph1}};
        IrlsOutcome best;
        bool first = true;
        for (const auto& s0 : starts) {
            IrlsOutcome cand = irls(m5, s0);
            if (first || cand.fit.sum_sq < best.fit.sum_sq) {
                best = cand;
                first = false;
            }
        }
        return best;
    }
};

}  // namespace detail

/// Transverse and axial velocity of one transit window.
///
/// Works on the fold image of the inverted shift: fits a Gaussian envelope,
/// decides from the residual periodogram whether an axial fringe modulation
/// is significant, and if so fits the modulated model in stages (fold fit to
/// pin the fringe frequency, demodulated envelope fit, then a reweighted
/// joint fit from several starts). The modulated model must beat the plain
/// envelope by a decisive margin before vz is reported.
inline TransitEstimate extract_velocities(const ProbeSetup& setup,
                                          const std::vector<double>& time,
                                          const std::vector<double>& transmission,
                                          double noise_sigma) {
    if (time.size() != transmission.size())
        throw std::invalid_argument("time and transmission lengths differ");
    if (!(noise_sigma > 0.0))
        throw std::invalid_argument("noise sigma must be positive (use the detected value)");
    const detail::InversionModel M(setup);
    detail::Extractor ex(M, setup, time, transmission, noise_sigma);

    using Outcome = detail::Extractor::IrlsOutcome;
    auto m3 = [&ex](const std::vector<double>& q, double tv) { return ex.model3(q, tv); };

    Outcome sol3 = ex.irls(m3, {2.0 * ex.Emax, ex.mu, ex.v0});

    // candidate fringe lines from two detrends of the fold image
    std::vector<double> detr(ex.n), res3(ex.n);
    for (std::size_t i = 0; i < ex.n; ++i) {
        detr[i] = ex.inv.lower[i] - ex.sm[i];
        res3[i] = ex.inv.lower[i] - M.fold(ex.model3(sol3.fit.params, ex.t[i]));
    }
    const SpectralPeak pk1 = periodogram_peak(detr, ex.fs, ex.fmin);
    const SpectralPeak pk2 = periodogram_peak(res3, ex.fs, ex.fmin);

    bool modulated = false;
    Outcome solm;
    if (std::max(pk1.ratio, pk2.ratio) >= 50.0) {
        std::vector<double> cands;
        for (double fc : {pk1.frequency, pk1.frequency / 2.0, pk2.frequency,
                          pk2.frequency / 2.0}) {
            if (fc <= ex.fmin) continue;
            bool dup = false;
            for (double o : cands)
                if (std::abs(fc - o) <= 0.5 / ex.span) dup = true;
            if (!dup) cands.push_back(fc);
        }
        bool first = true;
        for (double fc : cands) {
            Outcome cand = ex.fit_modulated(fc);
            if (first || cand.fit.sum_sq < solm.fit.sum_sq) {
                solm = cand;
                first = false;
            }
        }
        // promote only on a decisive win over the plain envelope
        if (!first && sol3.fit.sum_sq - solm.fit.sum_sq > 25.0) modulated = true;
    }

    const Outcome& sol = modulated ? solm : sol3;
    const std::vector<double>& p = sol.fit.params;

    TransitEstimate out;
    out.modulated = modulated;
    out.ambiguous_fraction = ex.inv.ambiguous_fraction;
    out.snr = (1.0 - setup.baseline()) / noise_sigma;

    const std::size_t dof =
        std::max<std::size_t>(sol.n_active > p.size() ? sol.n_active - p.size() : 1, 1);
    out.chi2_reduced = sol.fit.sum_sq / static_cast<double>(dof);
    const double sigma_scale = std::max(1.0, std::sqrt(out.chi2_reduced));

    const double A = p[0], tc = p[1], v = std::abs(p[2]);
    out.shift_amplitude = A;
    out.center_time = tc;
    const double tau_fit = M.w0 / std::max(v * std::sqrt(2.0), 1e-12);
    const bool contained =
        tau_fit < 0.45 * ex.span && tc >= ex.t.front() && tc <= ex.t.back();
    const double svx = sol.fit.sigma(2) * sigma_scale;
    out.vx = v;
    out.vx_sigma = svx;
    out.vx_available = contained && std::isfinite(svx) && svx < 0.25 * std::max(v, 1e-12);
    if (!contained)
        out.vx_note = "envelope not contained in the window";
    else if (!out.vx_available)
        out.vx_note = "envelope width poorly constrained";

    if (modulated) {
        const double f = std::abs(p[3]);
        const double phi = p[4];
        int n_max = 0;
        const double jr = phi / (2.0 * pi);
        const long jlo =
            static_cast<long>(std::floor((ex.t.front() - ex.tm) * f + jr)) - 1;
        const long jhi = static_cast<long>(std::ceil((ex.t.back() - ex.tm) * f + jr)) + 1;
        for (long j = jlo; j <= jhi; ++j) {
            const double tj = ex.tm + (static_cast<double>(j) - jr) / f;
            if (tj >= ex.t.front() && tj <= ex.t.back() &&
                ex.model3({A, tc, p[2]}, tj) > 0.15 * std::abs(A))
                ++n_max;
        }
        out.fringe_maxima = n_max;
        if (n_max >= 3) {
            out.vz = f * M.lam / 2.0;
            out.vz_sigma = sol.fit.sigma(3) * sigma_scale * M.lam / 2.0;
            out.vz_available = std::isfinite(sol.fit.sigma(3));
            if (!out.vz_available) out.vz_note = "fringe frequency uncertainty singular";
        } else {
            // too few fringes: the envelope and the modulation are entangled,
            // so neither velocity is trustworthy
            out.vx_available = false;
            out.vx_note = "fewer than 3 fringe maxima: envelope entangled with modulation";
            out.vz_note = "fewer than 3 fringe maxima in the window";
        }
    } else {
        out.vz_note = "no significant fringe modulation";
    }

    if (out.ambiguous_fraction > 0.2) {
        out.vx_available = false;
        out.vx_note = "more than 20% of samples past the branch point";
    }

    // model-guided branch resolution for the reported shift series
    out.resolved_shift.resize(ex.n);
    double peak = 0.0;
    for (std::size_t i = 0; i < ex.n; ++i) {
        const double dm = modulated ? ex.model5(p, ex.t[i]) : ex.model3(p, ex.t[i]);
        double d;
        if (ex.inv.disc[i] < 0.0)
            d = M.dstar;
        else if (std::abs(ex.inv.upper[i] - dm) < std::abs(ex.inv.lower[i] - dm))
            d = ex.inv.upper[i];
        else
            d = ex.inv.lower[i];
        out.resolved_shift[i] = d;
        peak = std::max(peak, d);
    }
    out.peak_shift_over_kappa = peak / M.kappa;
    return out;
}

// ---------------------------------------------------------------------------
// detectability
// ---------------------------------------------------------------------------

/// Sensitivity gain of an improved cavity relative to a reference: the peak
/// transmission response scales with U0/kappa, i.e. inversely with mode
/// volume and linewidth.
inline double sensitivity_gain(const CavityMode& reference, const CavityMode& improved) {
    return (reference.mode_volume / improved.mode_volume) *
           (reference.kappa / improved.kappa);
}

/// Smallest detectable radius given a reference radius that produces a
/// full-contrast dip at the stated signal-to-noise ratio. The transmission
/// response of a small particle scales with its polarizability, so with r^3:
/// requiring an n_sigma excursion over the noise floor shrinks the radius by
/// (n_sigma / (snr * gain))^(1/3).
inline double min_detectable_radius(double reference_radius, double snr, double n_sigma,
                                    double gain = 1.0) {
    if (!(reference_radius > 0.0) || !(snr > 0.0) || !(n_sigma > 0.0) || !(gain > 0.0))
        throw std::invalid_argument("min_detectable_radius needs positive arguments");
    return reference_radius * std::cbrt(n_sigma / (snr * gain));
}

}  // namespace microcav
