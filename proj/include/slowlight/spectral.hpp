#pragma once

// Atom-photon bound states of a single moving atom, a brute-force
// diagonalization oracle, and the exactly solvable cubic-dispersion model
// describing the Cherenkov point v = cbar.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <lapacke.h>

#include "band.hpp"
#include "detail/quadrature.hpp"
#include "dynamics.hpp"

namespace slowlight {

// ---------------------------------------------------------------------------
// Bound states

struct BoundState {
    double omega = 0.0;
    double residual = 0.0;          // |omega - delta - Sigma(omega)|
    double photon_fraction = 0.0;   // 1 - |c_e|^2
    double localization_length = 0.0; // RMS width of the photon density
};

struct BoundStateResult {
    std::optional<BoundState> plus;  // above the tilted band
    std::optional<BoundState> minus; // below the tilted band
};

/// Self-energy (gbar^2 a / 2 pi) int dk / (omega - w~_k) for omega outside the band.
inline double bound_self_energy(double omega, const ComovingFrame& frame, double gbar, const BandExtremes& ext)
{
    const double edge = pi / frame.band.a;
    const std::array<double, 3> breaks{ext.k_at_min, ext.k_at_max, 0.0};
    const auto res = detail::integrate([&](double k) { return 1.0 / (omega - detail::tilted_raw(k, frame)); },
                                       -edge, edge, breaks, 1e-12);
    return gbar * gbar * frame.band.a / (2.0 * pi) * res.value;
}

namespace detail {

inline double bound_norm_integral(double omega, const ComovingFrame& frame, const BandExtremes& ext)
{
    const double edge = pi / frame.band.a;
    const std::array<double, 3> breaks{ext.k_at_min, ext.k_at_max, 0.0};
    return integrate(
               [&](double k) {
                   const double x = omega - tilted_raw(k, frame);
                   return 1.0 / (x * x);
               },
               -edge, edge, breaks, 1e-10)
        .value;
}

inline double bound_width(double omega, const ComovingFrame& frame)
{
    const LatticeGrid grid{8192, frame.band.a};
    std::vector<cplx> psi_k(grid.n_sites);
    for (int m = 0; m < grid.n_sites; ++m) psi_k[m] = 1.0 / (omega - tilted_raw(grid.k(m), frame));
    const auto psi = to_position(psi_k, grid);
    double w = 0.0, z2 = 0.0;
    for (int n = 0; n < grid.n_sites; ++n) {
        const double z = grid.wrap(n * grid.a);
        const double p = std::norm(psi[n]);
        w += p;
        z2 += z * z * p;
    }
    return std::sqrt(z2 / w);
}

} // namespace detail

/// Roots of omega - delta = Sigma(omega) above and below the tilted band,
/// found by bisection on (w~_max, w~_max + 4J + 10 gbar] and the mirror bracket.
inline BoundStateResult bound_state_frequencies(double delta, const ComovingFrame& frame, double gbar)
{
    if (!(gbar > 0.0)) throw std::invalid_argument("bound_state_frequencies: gbar must be > 0");
    frame.band.validate();
    const auto ext = frame.extremes();
    const double J = frame.band.J;
    const double gap = 1e-10 * J;
    const double reach = 4.0 * J + 10.0 * gbar;
    const auto F = [&](double w) { return w - delta - bound_self_energy(w, frame, gbar, ext); };

    const auto solve = [&](double lo, double hi) -> std::optional<BoundState> {
        const double flo = F(lo), fhi = F(hi);
        if ((flo > 0) == (fhi > 0)) return std::nullopt;
        BoundState s;
        s.omega = detail::bisect(F, lo, hi, 1e-13 * J);
        s.residual = std::abs(F(s.omega));
        const double ce2 = 1.0 / (1.0 + gbar * gbar * frame.band.a / (2.0 * pi) *
                                            detail::bound_norm_integral(s.omega, frame, ext));
        s.photon_fraction = 1.0 - ce2;
        s.localization_length = detail::bound_width(s.omega, frame);
        return s;
    };
    BoundStateResult out;
    out.plus = solve(ext.max + gap, ext.max + reach);
    out.minus = solve(ext.min - reach, ext.min - gap);
    return out;
}

struct OracleBoundState {
    double omega = 0.0;
    double ipr = 0.0;               // inverse participation ratio of the photon part in site space
    double atom_weight = 0.0;       // |c_e|^2
    std::vector<cplx> photon_sites; // normalized photon amplitude on sites
};

struct ComovingSpectrum {
    std::vector<double> eigenvalues; // ascending
    double band_min = 0.0;           // extremes of the discrete tilted band
    double band_max = 0.0;
    std::vector<OracleBoundState> bound; // eigenvalues outside [band_min, band_max]
};

/// Eigenvalues of the (N+1)x(N+1) co-moving single-excitation matrix with
/// diagonal {delta, w~_kj} and atom-mode coupling gbar sqrt(a/L).
inline ComovingSpectrum diagonalize_comoving(double delta, const ComovingFrame& frame, double gbar, int n_sites)
{
    frame.band.validate();
    const LatticeGrid grid{n_sites, frame.band.a};
    grid.validate();
    if (n_sites > 8192) throw std::invalid_argument("diagonalize_comoving: n_sites must be <= 8192");
    const int N = n_sites, D = N + 1;
    const double coup = gbar * std::sqrt(grid.a / grid.length());
    std::vector<double> wk(N);
    for (int m = 0; m < N; ++m) wk[m] = detail::tilted_raw(grid.k(m), frame);

    std::vector<double> A(static_cast<std::size_t>(D) * D, 0.0);
    A[0] = delta;
    for (int m = 0; m < N; ++m) {
        A[static_cast<std::size_t>(m + 1) * D + (m + 1)] = wk[m];
        A[static_cast<std::size_t>(m + 1)] = coup;                // row 0
        A[static_cast<std::size_t>(m + 1) * D] = coup;            // column 0
    }
    std::vector<double> w(D);
    const lapack_int info = LAPACKE_dsyevd(LAPACK_ROW_MAJOR, 'N', 'U', D, A.data(), D, w.data());
    if (info != 0) throw std::runtime_error("diagonalize_comoving: dsyevd failed, info = " + std::to_string(info));

    ComovingSpectrum out;
    out.eigenvalues = w;
    out.band_min = *std::min_element(wk.begin(), wk.end());
    out.band_max = *std::max_element(wk.begin(), wk.end());
    for (double lam : w) {
        if (lam >= out.band_min && lam <= out.band_max) continue;
        // Arrowhead eigenvector: photon amplitudes coup / (lam - w~_k), atom amplitude 1.
        std::vector<cplx> b(N);
        double nb = 0.0;
        for (int m = 0; m < N; ++m) {
            b[m] = coup / (lam - wk[m]);
            nb += std::norm(b[m]);
        }
        OracleBoundState s;
        s.omega = lam;
        s.atom_weight = 1.0 / (1.0 + nb);
        for (auto& x : b) x /= std::sqrt(nb);
        s.photon_sites = to_position(b, grid);
        double p4 = 0.0;
        for (const auto& x : s.photon_sites) p4 += std::norm(x) * std::norm(x);
        s.ipr = p4;
        out.bound.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cubic-dispersion model: w~_k = -J (a k)^3 / 3, measured from the critical
// frequency, with the critical wavevector shifted to k = 0.

struct CubicModelParams {
    double J = 1.0;
    double a = 1.0;
    double gbar = 0.2;
    double delta = 0.0; // omega_a - omega_c

    void validate() const
    {
        if (!(J > 0.0)) throw std::invalid_argument("cubic model: J must be > 0");
        if (!(a > 0.0)) throw std::invalid_argument("cubic model: a must be > 0");
        if (!(gbar > 0.0)) throw std::invalid_argument("cubic model: gbar must be > 0");
    }
};

inline double cubic_dispersion(double k, const CubicModelParams& p)
{
    const double x = p.a * k;
    return -p.J * x * x * x / 3.0;
}

/// I_z(k) = (a / 2 pi) int dk' e^{i k' z} / (w~_k - w~_k' + i0).
/// Continuous in z; the z < 0 side carries the propagating e^{ikz} term.
inline cplx cubic_I(double z, double k, const CubicModelParams& p)
{
    p.validate();
    if (k == 0.0) throw std::domain_error("cubic_I: k = 0 is excluded");
    const double s = k > 0 ? 1.0 : -1.0;
    const double r3 = std::sqrt(3.0);
    const cplx A = -cplx(s * r3, 1.0) / (2.0 * p.J * p.a * p.a * k * k);
    const double kz = k * z;
    const cplx evanescent = std::exp(cplx(-0.5 * r3 * std::abs(kz), -0.5 * kz));
    if (z >= 0.0) return A * evanescent;
    return A * (std::polar(1.0, -s * pi / 3.0) * evanescent + std::polar(1.0, s * pi / 3.0 + kz));
}

struct CubicScatteringState {
    cplx c_e{};      // atomic amplitude of the scattering state
    cplx gamma_k{};  // gbar^2 I_0 / (w~_k - delta - gbar^2 I_0)
    std::vector<cplx> psi; // photon wavefunction on the requested grid
};

inline CubicScatteringState cubic_scattering_state(double k, const CubicModelParams& p, std::span<const double> z_grid)
{
    const cplx I0 = cubic_I(0.0, k, p);
    const double g2 = p.gbar * p.gbar;
    const cplx den = cubic_dispersion(k, p) - p.delta - g2 * I0;
    CubicScatteringState out;
    out.c_e = std::sqrt(p.a / (2.0 * pi)) * p.gbar / den;
    out.gamma_k = g2 * I0 / den;
    const double norm = 1.0 / std::sqrt(2.0 * pi);
    out.psi.reserve(z_grid.size());
    for (double z : z_grid)
        out.psi.push_back(norm * (std::polar(1.0, k * z) + g2 * cubic_I(z, k, p) / den));
    return out;
}

/// |c_e^k|^2 of the scattering state with wavevector k.
inline double cubic_weight(double k, const CubicModelParams& p)
{
    const cplx I0 = cubic_I(0.0, k, p);
    const cplx den = cubic_dispersion(k, p) - p.delta - p.gbar * p.gbar * I0;
    return p.a / (2.0 * pi) * p.gbar * p.gbar / std::norm(den);
}

struct CriticalRates {
    double Omega_c = 0.0;
    double Gamma_c = 0.0;
};

/// Oscillation and decay rates of the two dominant poles at the Cherenkov point.
inline CriticalRates critical_rates(double gbar, double J)
{
    if (!(gbar > 0.0)) throw std::invalid_argument("critical_rates: gbar must be > 0");
    if (!(J > 0.0)) throw std::invalid_argument("critical_rates: J must be > 0");
    const double s = std::pow(std::pow(gbar, 6) / (9.0 * J), 0.2);
    const double r5 = std::sqrt(5.0);
    return {std::sqrt(5.0 + r5) / (2.0 * std::sqrt(2.0)) * s, 0.5 * (r5 - 1.0) * s};
}

/// Pole approximation cos^2(Omega_c t) exp(-Gamma_c t).
inline double critical_decay_approx(double t, const CriticalRates& r)
{
    const double c = std::cos(r.Omega_c * t);
    return c * c * std::exp(-r.Gamma_c * t);
}

struct CubicDecay {
    std::vector<double> times;
    std::vector<double> pe;
    double K = 0.0;               // wavevector cutoff
    double truncated_weight = 0.0; // asymptotic weight outside [-K, K]
    double sum_rule = 0.0;         // int_{-K}^{K} |c_e^k|^2 dk + truncated weight
};

namespace detail {

// Asymptotic weight of |k| > K, where |c_e^k|^2 -> (a / 2 pi) 9 gbar^2 / (J^2 a^6 k^6).
inline double cubic_tail_weight(double K, const CubicModelParams& p)
{
    return p.a / (2.0 * pi) * 18.0 * p.gbar * p.gbar / (5.0 * p.J * p.J * std::pow(p.a, 6) * std::pow(K, 5));
}

using Gl12 = boost::math::quadrature::gauss<double, 12>;

} // namespace detail

/// p_e(t) = |int dk |c_e^k|^2 e^{-i w~_k t}|^2 by quadrature over the spectral
/// variable omega = w~_k on [-W, W], W = w~(-K). K is the smallest cutoff whose
/// asymptotic tail weight is below 1e-7 (capped below by 50 (gbar^2/J)^{1/3}/a).
inline CubicDecay cubic_decay(const CubicModelParams& p, double t_max, double dt)
{
    p.validate();
    if (!(t_max > 0.0)) throw std::invalid_argument("cubic_decay: t_max must be > 0");
    if (!(dt > 0.0)) throw std::invalid_argument("cubic_decay: dt must be > 0");

    const double K_default = 50.0 * std::cbrt(p.gbar * p.gbar / p.J) / p.a;
    const double K_tail = std::pow(p.a / (2.0 * pi) * 18.0 * p.gbar * p.gbar /
                                       (5.0 * p.J * p.J * std::pow(p.a, 6) * 1e-7),
                                   0.2);
    CubicDecay out;
    out.K = std::min(K_default, K_tail);
    if (detail::cubic_tail_weight(out.K, p) > 1e-6) out.K = K_tail;
    out.truncated_weight = detail::cubic_tail_weight(out.K, p);

    // Spectral density rho(omega) = |c_e^k|^2 / |dw~/dk| at k(omega).
    const double a3 = p.a * p.a * p.a;
    const auto rho = [&](double w) {
        const double k = -std::cbrt(3.0 * w / (p.J * a3));
        return cubic_weight(k, p) / (p.J * a3 * k * k);
    };
    const double W = p.J * std::pow(p.a * out.K, 3) / 3.0;
    const double scale = critical_rates(p.gbar, p.J).Gamma_c;
    const double h_osc = 2.0 * pi / t_max;
    const double h_min = 0.01 * scale;
    const auto width = [&](double w) {
        const double dist = std::min(std::abs(w), std::abs(w - p.delta));
        return std::min(h_osc, std::max(h_min, 0.1 * dist));
    };

    // Panels grown outward from 0 in both directions.
    std::vector<double> edges{0.0};
    for (double w = 0.0; w < W;) edges.push_back(w = std::min(W, w + width(w)));
    for (double w = 0.0; w > -W;) edges.push_back(w = std::max(-W, w - width(w)));
    if (p.delta > -W && p.delta < W) edges.push_back(p.delta);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    std::vector<double> nodes, weights;
    nodes.reserve(12 * edges.size());
    weights.reserve(12 * edges.size());
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double c = 0.5 * (edges[i] + edges[i + 1]), h = 0.5 * (edges[i + 1] - edges[i]);
        const auto& x = detail::Gl12::abscissa();
        const auto& wt = detail::Gl12::weights();
        for (std::size_t j = 0; j < x.size(); ++j)
            for (double sgn : {-1.0, 1.0}) {
                const double w = c + sgn * h * x[j];
                nodes.push_back(w);
                weights.push_back(h * wt[j] * rho(w));
            }
    }

    double inner = 0.0;
    for (double x : weights) inner += x;
    out.sum_rule = inner + out.truncated_weight;
    if (std::abs(out.sum_rule - 1.0) > 1e-3)
        throw std::runtime_error("cubic_decay: spectral quadrature did not converge (sum rule " +
                                 std::to_string(out.sum_rule) + ")");

    const long n_steps = std::max(1L, std::lround(t_max / dt));
    const double h = t_max / static_cast<double>(n_steps);
    const std::size_t M = nodes.size();
    std::vector<cplx> ph(M), step(M);
    for (std::size_t i = 0; i < M; ++i) step[i] = std::polar(1.0, -nodes[i] * h);
    for (long s = 0; s <= n_steps; ++s) {
        const double t = s * h;
        if (s % 64 == 0)
            for (std::size_t i = 0; i < M; ++i) ph[i] = std::polar(1.0, -nodes[i] * t);
        cplx ce{};
        for (std::size_t i = 0; i < M; ++i) ce += weights[i] * ph[i];
        out.times.push_back(t);
        out.pe.push_back(std::norm(ce));
        for (std::size_t i = 0; i < M; ++i) ph[i] *= step[i];
    }
    return out;
}

} // namespace slowlight
