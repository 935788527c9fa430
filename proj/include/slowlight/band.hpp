#pragma once

// Cosine tight-binding band, the co-moving (tilted) frame of an atom moving at
// constant velocity, resonance finding and the broadened density of states.
//
// Units: hbar = 1, the band center omega_0 is the frequency origin.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "detail/quadrature.hpp"

namespace slowlight {

inline constexpr double pi = std::numbers::pi;

struct BandParams {
    double J = 1.0;       // tunneling energy
    double a = 1.0;       // lattice constant
    double gamma_p = 0.0; // photon loss rate

    /// Maximal group velocity of the band.
    double cbar() const { return 2.0 * J * a; }

    void validate() const
    {
        if (!(J > 0.0)) throw std::invalid_argument("band: J must be > 0");
        if (!(a > 0.0)) throw std::invalid_argument("band: a must be > 0");
        if (!(gamma_p >= 0.0)) throw std::invalid_argument("band: gamma_p must be >= 0");
    }
};

struct BandExtremes {
    double min = 0.0;
    double max = 0.0;
    double k_at_min = 0.0;
    double k_at_max = 0.0;
};

/// Frame translating with an atom of velocity v, in which the dispersion is
/// tilted: omega_k -> omega_k - k v.
struct ComovingFrame {
    BandParams band;
    double v = 0.0;

    /// Coupling modulation frequency seen by the moving atom, 2 pi |v| / a.
    double modulation_frequency() const { return 2.0 * pi * std::abs(v) / band.a; }
    BandExtremes extremes() const;
};

struct Resonance {
    double k = 0.0;
    double vg_comoving = 0.0; // v_g(k) - v
    int multiplicity = 1;
};

inline bool in_zone(double k, const BandParams& band)
{
    const double edge = pi / band.a;
    return k > -edge && k <= edge * (1.0 + 1e-14);
}

inline void check_zone(double k, const BandParams& band)
{
    if (!in_zone(k, band))
        throw std::domain_error("wavevector " + std::to_string(k) +
                                " lies outside the first Brillouin zone (-pi/a, pi/a]");
}

inline double dispersion(double k, const BandParams& band)
{
    check_zone(k, band);
    return -2.0 * band.J * std::cos(k * band.a);
}

inline double group_velocity(double k, const BandParams& band)
{
    check_zone(k, band);
    return 2.0 * band.J * band.a * std::sin(k * band.a);
}

inline double tilted_dispersion(double k, const ComovingFrame& frame)
{
    return dispersion(k, frame.band) - frame.v * k;
}

inline double comoving_group_velocity(double k, const ComovingFrame& frame)
{
    return group_velocity(k, frame.band) - frame.v;
}

namespace detail {

// Unchecked variants for inner loops where k is known to lie in the closed zone.
inline double tilted_raw(double k, const ComovingFrame& f)
{
    return -2.0 * f.band.J * std::cos(k * f.band.a) - f.v * k;
}

inline double tilted_slope_raw(double k, const ComovingFrame& f)
{
    return 2.0 * f.band.J * f.band.a * std::sin(k * f.band.a) - f.v;
}

inline double tilted_curvature_raw(double k, const ComovingFrame& f)
{
    return 2.0 * f.band.J * f.band.a * f.band.a * std::cos(k * f.band.a);
}

inline constexpr int kScanPoints = 4096;

// Geometric breakpoints on both sides of a sharp peak at k0, so that a
// Lorentzian of any width centred there is resolved by the panel layout.
inline void add_peak_breaks(std::vector<double>& breaks, double k0)
{
    breaks.push_back(k0);
    for (int m = -12; m <= 0; ++m) {
        const double s = std::pow(10.0, m);
        breaks.push_back(k0 - s);
        breaks.push_back(k0 + s);
    }
}

} // namespace detail

inline BandExtremes ComovingFrame::extremes() const
{
    band.validate();
    const double edge = pi / band.a;
    const int n = detail::kScanPoints;
    const double h = 2.0 * edge / n;
    int jmin = 0, jmax = 0;
    double fmin = detail::tilted_raw(-edge, *this), fmax = fmin;
    for (int j = 1; j <= n; ++j) {
        const double f = detail::tilted_raw(-edge + j * h, *this);
        if (f < fmin) { fmin = f; jmin = j; }
        if (f > fmax) { fmax = f; jmax = j; }
    }
    const auto refine = [&](int j, double sign) {
        const double lo = std::max(-edge, -edge + (j - 1) * h);
        const double hi = std::min(edge, -edge + (j + 1) * h);
        auto r = boost::math::tools::brent_find_minima(
            [&](double k) { return sign * detail::tilted_raw(k, *this); }, lo, hi, 52);
        return std::pair{r.first, sign * r.second};
    };
    BandExtremes out;
    std::tie(out.k_at_min, out.min) = refine(jmin, 1.0);
    std::tie(out.k_at_max, out.max) = refine(jmax, -1.0);
    // Endpoints are not bracketed by brent; keep the grid value if it is better.
    if (fmin < out.min) { out.min = fmin; out.k_at_min = -edge + jmin * h; }
    if (fmax > out.max) { out.max = fmax; out.k_at_max = -edge + jmax * h; }
    return out;
}

/// All real solutions of tilted_dispersion(k) = delta in (-pi/a, pi/a].
///
/// Uniform sign-change scan followed by bisection to |residual| < 1e-10 J.
/// Tangential (double) roots are caught by refining local minima of |residual|.
/// Roots with |v_g - v| < 1e-6 cbar are flagged degenerate (multiplicity 2, or 3
/// when the curvature also vanishes).
inline std::vector<Resonance> resonant_wavevectors(double delta, const ComovingFrame& frame)
{
    frame.band.validate();
    const double edge = pi / frame.band.a;
    const int n = detail::kScanPoints;
    const double h = 2.0 * edge / n;
    const double ftol = 1e-10 * frame.band.J;
    const auto f = [&](double k) { return detail::tilted_raw(k, frame) - delta; };

    std::vector<double> ks(n + 1), fs(n + 1);
    for (int j = 0; j <= n; ++j) {
        ks[j] = (j == n) ? edge : -edge + j * h;
        fs[j] = f(ks[j]);
    }

    std::vector<double> roots;
    const auto add = [&](double k) {
        if (!(k > -edge) || k > edge) return;
        for (double r : roots)
            if (std::abs(r - k) < 1e-8 / frame.band.a) return;
        roots.push_back(k);
    };

    for (int j = 1; j <= n; ++j) {
        if (fs[j] == 0.0) {
            add(ks[j]);
        } else if (fs[j - 1] != 0.0 && (fs[j - 1] > 0) != (fs[j] > 0)) {
            add(detail::bisect(f, ks[j - 1], ks[j], ftol));
        }
    }
    for (int j = 1; j < n; ++j) {
        const bool same_side = (fs[j - 1] > 0) == (fs[j] > 0) && (fs[j + 1] > 0) == (fs[j] > 0);
        if (!same_side || fs[j] == 0.0) continue;
        if (std::abs(fs[j]) > std::abs(fs[j - 1]) || std::abs(fs[j]) > std::abs(fs[j + 1])) continue;
        const double s = fs[j] > 0 ? 1.0 : -1.0;
        auto [kbest, vbest] = boost::math::tools::brent_find_minima(
            [&](double k) { return s * f(k); }, ks[j - 1], ks[j + 1], 60);
        if (vbest < 0.0) {
            // Two close roots straddle a single grid point.
            add(detail::bisect(f, ks[j - 1], kbest, ftol));
            add(detail::bisect(f, kbest, ks[j + 1], ftol));
        } else if (vbest < ftol) {
            add(kbest);
        }
    }

    std::sort(roots.begin(), roots.end());
    std::vector<Resonance> out;
    out.reserve(roots.size());
    for (double k : roots) {
        Resonance r{k, detail::tilted_slope_raw(k, frame), 1};
        if (std::abs(r.vg_comoving) < 1e-6 * frame.band.cbar()) {
            const double curv = std::abs(detail::tilted_curvature_raw(k, frame));
            r.multiplicity = curv < 1e-2 * frame.band.J * frame.band.a * frame.band.a ? 3 : 2;
        }
        out.push_back(r);
    }
    return out;
}

/// Density of states in the co-moving frame,
/// (a / 2 pi) * integral over the zone of L(omega - omega~_k) dk,
/// with L a unit-area Lorentzian of full width `broadening`.
inline double dos_comoving(double omega, const ComovingFrame& frame, double broadening)
{
    if (!(broadening > 0.0)) throw std::invalid_argument("dos_comoving: broadening must be > 0");
    frame.band.validate();
    const double edge = pi / frame.band.a;
    const double hw = 0.5 * broadening;
    std::vector<double> breaks;
    for (const auto& r : resonant_wavevectors(omega, frame)) detail::add_peak_breaks(breaks, r.k);
    const auto ext = frame.extremes();
    breaks.push_back(ext.k_at_min);
    breaks.push_back(ext.k_at_max);
    breaks.push_back(0.0);
    const auto lorentz = [&](double k) {
        const double x = omega - detail::tilted_raw(k, frame);
        return (hw / pi) / (x * x + hw * hw);
    };
    const auto res = detail::integrate(lorentz, -edge, edge, breaks, 1e-8);
    return frame.band.a / (2.0 * pi) * res.value;
}

} // namespace slowlight
