#pragma once

// SI-unit design calculators: axial band structure of a radius-modulated
// optical fiber near cutoff, and the field and coupling strength of a
// coplanar-waveguide resonator array for Rydberg atoms.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <lapacke.h>

#include "band.hpp"
#include "detail/quadrature.hpp"

namespace slowlight::si {

inline constexpr double hbar = 1.054571817e-34;    // J s
inline constexpr double c = 299792458.0;           // m / s
inline constexpr double epsilon0 = 8.8541878128e-12; // F / m

/// Maps SI (J in rad/s, a in m) onto the dimensionless units of the dynamics
/// modules, where J = a = 1.
struct LatticeUnits {
    double J = 1.0; // rad / s
    double a = 1.0; // m

    double rate(double x_si) const { return x_si / J; }
    double time(double t_si) const { return t_si * J; }
    double length(double z_si) const { return z_si / a; }
    double velocity(double v_si) const { return v_si / (J * a); }
    double rate_si(double x) const { return x * J; }
    double velocity_si(double v) const { return v * J * a; }
};

// ---------------------------------------------------------------------------
// Fiber

struct FiberParams {
    double R0 = 0.0;      // m
    double n = 1.0;       // refractive index
    double omega_e = 0.0; // cutoff angular frequency, rad/s
    double deltaR = 0.0;  // modulation amplitude, m
    double a = 0.0;       // modulation period, m

    /// Azimuthal/radial mode order from omega_e = l c / (n R0).
    double ell() const { return omega_e * n * R0 / c; }
    /// Effective photon mass omega_e n^2 hbar / c^2.
    double effective_mass() const { return omega_e * n * n * hbar / (c * c); }
    /// Potential amplitude hbar omega_e deltaR / R0.
    double V0() const { return hbar * omega_e * deltaR / R0; }

    void validate() const
    {
        if (!(R0 > 0.0)) throw std::invalid_argument("fiber: R0 must be > 0");
        if (!(n > 0.0)) throw std::invalid_argument("fiber: n must be > 0");
        if (!(omega_e > 0.0)) throw std::invalid_argument("fiber: omega_e must be > 0");
        if (!(deltaR >= 0.0)) throw std::invalid_argument("fiber: deltaR must be >= 0");
        if (!(a > 0.0)) throw std::invalid_argument("fiber: a must be > 0");
    }
};

struct FiberBand {
    double m_eff = 0.0; // kg
    double V0 = 0.0;    // J
    double J = 0.0;     // rad / s
    double cbar = 0.0;  // m / s
    std::vector<double> q; // quasi-momentum, 1/m, on (-pi/a, pi/a]
    std::vector<double> E; // lowest band energy, J
    double cutoff_shift = 0.0; // max relative change of E between cutoffs 10 and 14
    bool mode_mixing_warning = false; // deltaR / R0 >= 1 / ell
    bool paraxial_warning = false;    // deltaR / a >= 0.05
};

namespace detail {

// Lowest eigenvalue of the central equation at quasi-momentum q:
// H_{mm'} = hbar^2 (q + m G)^2 / 2m* delta_{mm'} + (V0/2) delta_{|m-m'|,1}.
inline double central_equation_lowest(double q, double G, double kinetic, double V0, int cutoff)
{
    const int D = 2 * cutoff + 1;
    std::vector<double> d(D), e(D - 1, 0.5 * V0);
    for (int i = 0; i < D; ++i) {
        const double p = q + (i - cutoff) * G;
        d[i] = kinetic * p * p;
    }
    std::vector<double> w(D);
    lapack_int found = 0;
    std::vector<double> z(1);
    std::vector<lapack_int> ifail(D);
    const lapack_int info = LAPACKE_dstevx(LAPACK_ROW_MAJOR, 'N', 'I', D, d.data(), e.data(), 0.0, 0.0, 1, 1, 0.0,
                                           &found, w.data(), z.data(), 1, ifail.data());
    if (info != 0 || found != 1) throw std::runtime_error("fiber_band: eigensolver failed, info = " + std::to_string(info));
    return w[0];
}

} // namespace detail

/// Lowest Bloch band of -(hbar^2/2m*) psi'' + V0 cos(2 pi z / a) psi = E psi by
/// plane-wave expansion with |m| <= 10 on 201 quasi-momenta; J = bandwidth / (4 hbar).
inline FiberBand fiber_band(const FiberParams& p, int cutoff = 10, int n_q = 201)
{
    p.validate();
    if (cutoff < 1) throw std::invalid_argument("fiber_band: cutoff must be >= 1");
    if (n_q < 3) throw std::invalid_argument("fiber_band: need at least 3 quasi-momenta");
    FiberBand out;
    out.m_eff = p.effective_mass();
    out.V0 = p.V0();
    const double G = 2.0 * pi / p.a;
    const double kinetic = hbar * hbar / (2.0 * out.m_eff);
    const double E_R = kinetic * (0.5 * G) * (0.5 * G);
    const int check = cutoff + 4;
    for (int j = 0; j < n_q; ++j) {
        // Closed zone grid from -pi/a to pi/a; the endpoints are equivalent.
        const double q = -0.5 * G + G * j / (n_q - 1);
        const double e = detail::central_equation_lowest(q, G, kinetic, out.V0, cutoff);
        const double e_ref = detail::central_equation_lowest(q, G, kinetic, out.V0, check);
        out.cutoff_shift = std::max(out.cutoff_shift, std::abs(e - e_ref) / std::max(std::abs(e_ref), E_R));
        out.q.push_back(q);
        out.E.push_back(e);
    }
    if (out.cutoff_shift > 1e-3)
        throw std::runtime_error("fiber_band: plane-wave expansion not converged (relative shift " +
                                 std::to_string(out.cutoff_shift) + " between cutoffs " + std::to_string(cutoff) +
                                 " and " + std::to_string(check) + ")");
    const auto [lo, hi] = std::minmax_element(out.E.begin(), out.E.end());
    out.J = (*hi - *lo) / (4.0 * hbar);
    out.cbar = 2.0 * out.J * p.a;
    out.mode_mixing_warning = p.deltaR / p.R0 >= 1.0 / p.ell();
    out.paraxial_warning = p.deltaR / p.a >= 0.05;
    return out;
}

/// Tunneling rate of the empty lattice, hbar pi^2 / (8 m* a^2).
inline double free_band_J(const FiberParams& p)
{
    return hbar * pi * pi / (8.0 * p.effective_mass() * p.a * p.a);
}

/// Fiber radius variation equivalent to on-site frequency disorder eps (rad/s).
inline double disorder_radius(const FiberParams& p, double eps)
{
    return p.R0 * eps / p.omega_e;
}

// ---------------------------------------------------------------------------
// Coplanar waveguide

struct CPWParams {
    double l1 = 0.0;     // inner electrode half-gap, m
    double l2 = 0.0;     // outer electrode edge, m
    double Lx = 0.0;     // resonator length, m
    double omega0 = 0.0; // mode frequency, rad/s
    double y_a = 0.0;    // atom height above the surface, m
    double dipole = 0.0; // transition dipole moment, C m
    double a = 0.0;      // array period, m
    double h = 0.0;      // substrate thickness (not used by the field model), m

    void validate() const
    {
        if (!(l1 > 0.0 && l2 > l1)) throw std::invalid_argument("cpw: requires 0 < l1 < l2");
        if (!(y_a > 0.0)) throw std::invalid_argument("cpw: y_a must be > 0");
        if (!(Lx > 0.0)) throw std::invalid_argument("cpw: Lx must be > 0");
        if (!(omega0 > 0.0)) throw std::invalid_argument("cpw: omega0 must be > 0");
        if (!(dipole >= 0.0)) throw std::invalid_argument("cpw: dipole must be >= 0");
        if (!(a > 0.0)) throw std::invalid_argument("cpw: a must be > 0");
    }
};

struct FieldVector {
    double Ez = 0.0;
    double Ey = 0.0;

    double magnitude() const { return std::hypot(Ez, Ey); }
};

/// Complex field l1 l2 / sqrt((t^2 - l1^2)(t^2 - l2^2)) at t = z + i y, per unit E0.
/// The factored form keeps the branch continuous in the upper half plane and
/// matches l1 l2 / t^2 for large |t|.
inline std::complex<double> cpw_complex_field(double z, double y, double l1, double l2)
{
    if (!(y > 0.0)) throw std::domain_error("cpw_field: y must be > 0");
    const std::complex<double> t{z, y};
    const auto t2 = t * t;
    const double tiny = 1e-24;
    if (std::abs(t2 - l1 * l1) < tiny * l1 * l1 || std::abs(t2 - l2 * l2) < tiny * l2 * l2)
        throw std::domain_error("cpw_field: evaluation point on an electrode edge");
    // sqrt(t - l) sqrt(t + l) is analytic for Im t > 0.
    const auto root = std::sqrt(t - l1) * std::sqrt(t + l1) * std::sqrt(t - l2) * std::sqrt(t + l2);
    return l1 * l2 / root;
}

inline FieldVector cpw_field(double z, double y, const CPWParams& p)
{
    if (!(p.l1 > 0.0 && p.l2 > p.l1)) throw std::invalid_argument("cpw: requires 0 < l1 < l2");
    const auto E = cpw_complex_field(z, y, p.l1, p.l2);
    return {E.imag(), E.real()};
}

/// S = int_0^{y_max} dy int dz |E / E0|^2 (m^2). y_max = inf integrates the full half plane.
inline double cpw_mode_integral(const CPWParams& p, double y_max = std::numeric_limits<double>::infinity())
{
    if (!(p.l1 > 0.0 && p.l2 > p.l1)) throw std::invalid_argument("cpw: requires 0 < l1 < l2");
    if (!(y_max > 0.0)) throw std::invalid_argument("cpw_mode_integral: y_max must be > 0");
    const double l1 = p.l1, l2 = p.l2;
    const double Z = 4.0 * l2;
    // Even in z; the tail z > Z uses z = Z / s. Near the edges |E|^2 peaks on
    // the scale y, so panels are graded geometrically from there.
    const auto row = [&](double y) {
        const auto f = [&](double z) { return std::norm(cpw_complex_field(z, y, l1, l2)); };
        std::vector<double> brk{l1, l2};
        for (double e : {l1, l2})
            for (double d = y; d < 0.5 * l1; d *= 4.0) {
                brk.push_back(e - d);
                brk.push_back(e + d);
            }
        const double core = slowlight::detail::integrate(f, 0.0, Z, brk, 1e-9).value;
        const double tail = slowlight::detail::integrate([&](double s) { return f(Z / s) * Z / (s * s); }, 0.0, 1.0, 1e-9).value;
        return 2.0 * (core + tail);
    };
    // row(y) grows like log(1 / y) at small y.
    std::vector<double> ybrk{l1, l2};
    for (double d = 0.25 * l1; d > 1e-12 * l1; d *= 0.25) ybrk.push_back(d);
    const double y1 = std::min(y_max, 4.0 * l2);
    double S = slowlight::detail::integrate(row, 0.0, y1, ybrk, 1e-7).value;
    if (y_max > y1) {
        if (std::isinf(y_max))
            S += slowlight::detail::integrate([&](double s) { return row(y1 / s) * y1 / (s * s); }, 0.0, 1.0, 1e-7).value;
        else
            S += slowlight::detail::integrate(row, y1, y_max, 1e-7).value;
    }
    return S;
}

struct CPWCoupling {
    double E0 = 0.0;       // V/m per photon
    double V_r = 0.0;      // mode volume, m^3
    double g0 = 0.0;       // rad/s, at z = 0
    double gbar = 0.0;     // rad/s, cell-averaged
    double mean_u = 0.0;   // (1/a) int u over the cell with mean-square of u equal to 1
};

/// Per-photon field and coupling. E0 = sqrt(hbar omega0 / (2 eps0 V_r)) with
/// V_r = (Lx / 2) S; g0 = d E0 |E(i y_a)| / hbar; gbar = g0 * cell mean of the
/// normalized profile u = |E(z + i y_a)| / rms over z in [-a/2, a/2].
inline CPWCoupling cpw_coupling(const CPWParams& p)
{
    p.validate();
    CPWCoupling out;
    const double S = cpw_mode_integral(p);
    out.V_r = 0.5 * p.Lx * S;
    out.E0 = std::sqrt(hbar * p.omega0 / (2.0 * epsilon0 * out.V_r));
    out.g0 = p.dipole * out.E0 * cpw_field(0.0, p.y_a, p).magnitude() / hbar;
    const auto u = [&](double z) { return cpw_field(z, p.y_a, p).magnitude(); };
    const std::array<double, 4> brk{-p.l2, -p.l1, p.l1, p.l2};
    const double h = 0.5 * p.a;
    const double mean = slowlight::detail::integrate(u, -h, h, brk, 1e-10).value / p.a;
    const double ms = slowlight::detail::integrate([&](double z) { return u(z) * u(z); }, -h, h, brk, 1e-10).value / p.a;
    out.mean_u = mean / std::sqrt(ms);
    out.gbar = out.g0 * out.mean_u;
    return out;
}

} // namespace slowlight::si
