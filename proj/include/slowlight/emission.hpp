#pragma once

// Perturbative emission rates into the left/right halves of the zone, the
// directionality parameter, validity of the unit-cell averaged model,
// sideband channels, the effective-vs-full discrepancy and decay fits.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "band.hpp"
#include "detail/nelder_mead.hpp"
#include "detail/quadrature.hpp"
#include "dynamics.hpp"

namespace slowlight {

struct RatePair {
    double gamma_L = 0.0; // emission into k < 0
    double gamma_R = 0.0; // emission into k > 0

    double total() const { return gamma_L + gamma_R; }
};

/// Golden-rule rates with Lorentzian broadening of full width gamma_p:
///   Gamma_side = 2 gbar^2 (a / 2 pi) int_side (gamma_p/2) / ((delta - w~_k)^2 + (gamma_p/2)^2) dk.
/// Reduces to gbar^2 a / |v~_g(k_side)| for gamma_p -> 0 and simple in-band roots.
inline RatePair emission_rates(double delta, const ComovingFrame& frame, double gbar, double gamma_p)
{
    if (!(gamma_p > 0.0)) throw std::invalid_argument("emission_rates: gamma_p must be > 0");
    frame.band.validate();
    const double edge = pi / frame.band.a;
    const double hw = 0.5 * gamma_p;
    std::vector<double> breaks;
    for (const auto& r : resonant_wavevectors(delta, frame)) detail::add_peak_breaks(breaks, r.k);
    const auto ext = frame.extremes();
    breaks.push_back(ext.k_at_min);
    breaks.push_back(ext.k_at_max);
    const auto lorentz = [&](double k) {
        const double x = delta - detail::tilted_raw(k, frame);
        return hw / (x * x + hw * hw);
    };
    const double pref = 2.0 * gbar * gbar * frame.band.a / (2.0 * pi);
    RatePair out;
    out.gamma_L = pref * detail::integrate(lorentz, -edge, 0.0, breaks, 1e-9).value;
    out.gamma_R = pref * detail::integrate(lorentz, 0.0, edge, breaks, 1e-9).value;
    return out;
}

struct Directionality {
    double D = 0.0;
    RatePair rates;
    bool off_band = false; // both rates below 1e-14 J; D is reported as 0
};

/// D = (Gamma_L - Gamma_R) / (Gamma_L + Gamma_R); D > 0 means emission towards -z.
inline Directionality directionality(double delta, const ComovingFrame& frame, double gbar, double gamma_p)
{
    Directionality out;
    out.rates = emission_rates(delta, frame, gbar, gamma_p);
    const double floor = 1e-14 * frame.band.J;
    if (out.rates.gamma_L < floor && out.rates.gamma_R < floor) {
        out.off_band = true;
        return out;
    }
    out.D = (out.rates.gamma_L - out.rates.gamma_R) / out.rates.total();
    return out;
}

struct ValidityBound {
    double v_min = 0.0;        // in units of J a
    double v_min_over_cbar = 0.0;
};

/// Smallest |v| for which the modulation frequency 2 pi |v| / a exceeds
/// max_k |(delta + 2 J cos ka) / (1 - a k / 2 pi)| over the zone.
inline ValidityBound validity_min_velocity(double delta, const BandParams& band)
{
    band.validate();
    const int n = detail::kScanPoints;
    const double edge = pi / band.a;
    double m = 0.0;
    // The denominator stays in [1/2, 3/2] on the closed zone.
    for (int j = 0; j <= n; ++j) {
        const double k = -edge + 2.0 * edge * j / n;
        const double num = delta + 2.0 * band.J * std::cos(k * band.a);
        const double den = 1.0 - band.a * k / (2.0 * pi);
        m = std::max(m, std::abs(num / den));
    }
    ValidityBound out;
    out.v_min = band.a / (2.0 * pi) * m;
    out.v_min_over_cbar = out.v_min / band.cbar();
    return out;
}

struct Sideband {
    int n = 0;
    double frequency = 0.0; // delta + n Omega
    bool in_band = false;
    double weight = 1.0;    // |u^n|^2 / |u^0|^2
    double rate_estimate = 0.0;
};

/// Relative Fourier weights |u^n|^2 / |u^0|^2 of the cell-periodic coupling
/// profile built from the Gaussian Wannier function, by quadrature.
inline double sideband_weight(int n, const FullCoupling& coupling, double a)
{
    coupling.validate(a);
    const double lim = 6.0 * coupling.z0;
    const double q = 2.0 * pi * n / a;
    const std::array<double, 1> brk{0.0};
    const auto un = detail::integrate([&](double x) { return coupling.wannier(x, a) * std::cos(q * x); }, -lim, lim,
                                      brk, 1e-12);
    const auto u0 = detail::integrate([&](double x) { return coupling.wannier(x, a); }, -lim, lim, brk, 1e-12);
    const double r = un.value / u0.value;
    return r * r;
}

/// Channels at delta + n Omega, |n| <= n_max. rate_estimate is
/// 2 pi gbar^2 |u^n|^2/|u^0|^2 dos(delta + n Omega); the weight is 1 (qualitative
/// estimate) unless a site-resolved coupling is supplied. gamma_p <= 0 selects a
/// broadening of 0.01 J.
inline std::vector<Sideband> sideband_classifier(double delta, const ComovingFrame& frame, double gbar,
                                                 double gamma_p, const std::optional<FullCoupling>& coupling = {},
                                                 int n_max = 2)
{
    if (n_max < 0) throw std::invalid_argument("sideband_classifier: n_max must be >= 0");
    const double broadening = gamma_p > 0.0 ? gamma_p : 0.01 * frame.band.J;
    const double Omega = frame.modulation_frequency();
    const auto ext = frame.extremes();
    std::vector<Sideband> out;
    for (int n = -n_max; n <= n_max; ++n) {
        Sideband s;
        s.n = n;
        s.frequency = delta + n * Omega;
        s.in_band = s.frequency >= ext.min && s.frequency <= ext.max;
        s.weight = coupling ? sideband_weight(n, *coupling, frame.band.a) : 1.0;
        s.rate_estimate = 2.0 * pi * gbar * gbar * s.weight * dos_comoving(s.frequency, frame, broadening);
        out.push_back(s);
    }
    return out;
}

namespace detail {

inline double interpolate(std::span<const double> t, std::span<const double> y, double x)
{
    auto it = std::lower_bound(t.begin(), t.end(), x);
    if (it == t.end()) return y.back();
    const auto i = static_cast<std::size_t>(it - t.begin());
    if (i == 0 || *it == x) return y[i];
    const double f = (x - t[i - 1]) / (t[i] - t[i - 1]);
    return y[i - 1] + f * (y[i] - y[i - 1]);
}

} // namespace detail

/// d = max over t in [0, t_f] and atoms of |p_e^eff - p_e^full|. The full series
/// is linearly interpolated onto the effective time grid.
inline double discrepancy(const SimOutput& eff, const SimOutput& full, double t_f)
{
    if (eff.pe.size() != full.pe.size()) throw std::invalid_argument("discrepancy: atom counts differ");
    if (eff.times.empty() || full.times.empty()) throw std::invalid_argument("discrepancy: empty series");
    const double tol = 1e-9 * std::max(1.0, t_f);
    if (t_f > eff.times.back() + tol || t_f > full.times.back() + tol)
        throw std::invalid_argument("discrepancy: t_f = " + std::to_string(t_f) + " exceeds a series");
    double d = 0.0;
    for (std::size_t a = 0; a < eff.pe.size(); ++a)
        for (std::size_t s = 0; s < eff.times.size() && eff.times[s] <= t_f + tol; ++s)
            d = std::max(d, std::abs(eff.pe[a][s] - detail::interpolate(full.times, full.pe[a], eff.times[s])));
    return d;
}

enum class DecayModel { exponential, damped_cos2 };

struct DecayFit {
    DecayModel model = DecayModel::exponential;
    double Gamma = 0.0;
    double Omega = 0.0; // damped_cos2 only
    double rms_residual = 0.0;
    int iterations = 0;
};

class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, DecayFit best) : std::runtime_error(what), best_(best) {}
    const DecayFit& best_so_far() const { return best_; }

private:
    DecayFit best_;
};

/// Least-squares fit of exp(-Gamma t) (samples with t < 2/J excluded) or
/// cos^2(Omega t) exp(-Gamma t) (full series). Times are in units of 1/J.
inline DecayFit fit_decay(std::span<const double> t, std::span<const double> pe, DecayModel model, double J = 1.0)
{
    if (t.size() != pe.size()) throw std::invalid_argument("fit_decay: time and p_e lengths differ");
    if (t.size() < 50) throw std::invalid_argument("fit_decay: series needs at least 50 points");
    std::size_t first = 0;
    if (model == DecayModel::exponential)
        while (first < t.size() && t[first] < 2.0 / J) ++first;
    if (t.size() - first < 2) throw std::invalid_argument("fit_decay: no samples after the t < 2/J transient");
    const auto ts = t.subspan(first);
    const auto ys = pe.subspan(first);
    const double span = ts.back() - ts.front();
    if (!(span > 0.0)) throw std::invalid_argument("fit_decay: series has zero duration");

    const auto sse = [&](double G, double W) {
        double s = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            double m = std::exp(-std::abs(G) * ts[i]);
            if (model == DecayModel::damped_cos2) {
                const double c = std::cos(W * ts[i]);
                m *= c * c;
            }
            const double r = ys[i] - m;
            s += r * r;
        }
        return s;
    };
    const double n = static_cast<double>(ts.size());
    constexpr double xtol = 1e-10, ftol = 1e-14;
    constexpr int max_iter = 4000;
    const double rate_lo = 1e-3 / std::max(span, 1e-300), rate_hi = 20.0 * J;
    const auto logspace = [&](int i, int m) { return rate_lo * std::pow(rate_hi / rate_lo, i / double(m - 1)); };

    DecayFit fit;
    fit.model = model;
    bool converged = false;
    if (model == DecayModel::exponential) {
        double g0 = rate_lo, best = sse(g0, 0.0);
        for (int i = 1; i < 200; ++i)
            if (double s = sse(logspace(i, 200), 0.0); s < best) { best = s; g0 = logspace(i, 200); }
        auto r = detail::nelder_mead<1>([&](const std::array<double, 1>& x) { return sse(x[0], 0.0); }, {g0},
                                        {0.05 * g0}, xtol, ftol, max_iter);
        fit.Gamma = std::abs(r.x[0]);
        fit.rms_residual = std::sqrt(r.fx / n);
        fit.iterations = r.iterations;
        converged = r.converged;
    } else {
        double g0 = rate_lo, w0 = rate_lo, best = sse(g0, w0);
        for (int i = 0; i < 80; ++i)
            for (int j = 0; j < 80; ++j)
                if (double s = sse(logspace(i, 80), logspace(j, 80)); s < best) {
                    best = s;
                    g0 = logspace(i, 80);
                    w0 = logspace(j, 80);
                }
        auto r = detail::nelder_mead<2>([&](const std::array<double, 2>& x) { return sse(x[0], x[1]); },
                                        {g0, w0}, {0.05 * g0, 0.05 * w0}, xtol, ftol, max_iter);
        fit.Gamma = std::abs(r.x[0]);
        fit.Omega = std::abs(r.x[1]);
        fit.rms_residual = std::sqrt(r.fx / n);
        fit.iterations = r.iterations;
        converged = r.converged;
    }
    if (!converged) throw FitError("fit_decay: no convergence after " + std::to_string(max_iter) + " iterations", fit);
    return fit;
}

} // namespace slowlight
