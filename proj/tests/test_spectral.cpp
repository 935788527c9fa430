#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "slowlight/emission.hpp"
#include "slowlight/spectral.hpp"

using namespace slowlight;

namespace {

ComovingFrame frame(double v) { return ComovingFrame{BandParams{}, v}; }

double nearest(const std::vector<double>& xs, double x)
{
    double best = xs.front();
    for (double y : xs)
        if (std::abs(y - x) < std::abs(best - x)) best = y;
    return best;
}

double slope(const std::vector<double>& x, const std::vector<double>& y)
{
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= x.size();
    my /= y.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
    return sxy / sxx;
}

} // namespace

TEST(BoundStates, StaticClosedForm)
{
    const auto r = bound_state_frequencies(0.0, frame(0.0), 0.2);
    ASSERT_TRUE(r.plus && r.minus);
    const double w = oracle::static_bound_omega(0.2, 1.0);
    EXPECT_NEAR(w, 2.0001, 1e-4);
    EXPECT_NEAR(r.plus->omega, w, 1e-6);
    EXPECT_NEAR(r.minus->omega, -w, 1e-6);
    EXPECT_LT(r.plus->residual, 1e-8);
    EXPECT_LT(r.minus->residual, 1e-8);

    // Binding energy ~ g^4 / 16 close to the edge.
    const auto weak = bound_state_frequencies(0.0, frame(0.0), 0.05);
    ASSERT_TRUE(weak.plus && weak.minus);
    EXPECT_NEAR(weak.plus->omega, oracle::static_bound_omega(0.05, 1.0), 1e-10);
    EXPECT_NEAR(weak.minus->omega, -oracle::static_bound_omega(0.05, 1.0), 1e-10);
    EXPECT_THROW(bound_state_frequencies(0.0, frame(0.0), 0.0), std::invalid_argument);
}

TEST(BoundStates, ResidualsAcrossParameters)
{
    for (double v : {0.0, 0.8, 2.0})
        for (double d : {-1.0, 0.0, 1.5})
            for (double g : {0.1, 0.5}) {
                const auto r = bound_state_frequencies(d, frame(v), g);
                const auto ext = frame(v).extremes();
                for (const auto& s : {r.plus, r.minus}) {
                    if (!s) continue;
                    EXPECT_LT(s->residual, 1e-8);
                    EXPECT_TRUE(s->omega > ext.max || s->omega < ext.min);
                    EXPECT_GT(s->photon_fraction, 0.0);
                    EXPECT_LT(s->photon_fraction, 1.0);
                }
                if (r.plus) {
                    EXPECT_GT(r.plus->omega, ext.max);
                }
                if (r.minus) {
                    EXPECT_LT(r.minus->omega, ext.min);
                }
            }
}

TEST(BoundStates, OracleDecoupled)
{
    const auto s = diagonalize_comoving(0.3, frame(0.7), 0.0, 64);
    std::vector<double> expected{0.3};
    for (int m = 0; m < 64; ++m) {
        const double k = 2.0 * pi * (m - 31) / 64.0;
        expected.push_back(-2.0 * std::cos(k) - 0.7 * k);
    }
    std::sort(expected.begin(), expected.end());
    ASSERT_EQ(s.eigenvalues.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(s.eigenvalues[i], expected[i], 1e-12);
    EXPECT_THROW(diagonalize_comoving(0.0, frame(0.0), 0.1, 10000), std::invalid_argument);
    EXPECT_THROW(diagonalize_comoving(0.0, frame(0.0), 0.1, 63), std::invalid_argument);
}

TEST(BoundStates, OracleAgreement)
{
    for (auto [d, v, g] : std::vector<std::array<double, 3>>{{0.0, 0.0, 1.0}, {1.0, 0.0, 0.6}, {3.0, 0.5, 1.0}}) {
        const auto r = bound_state_frequencies(d, frame(v), g);
        ASSERT_TRUE(r.plus && r.minus);
        for (int n : {256, 1024}) {
            const auto s = diagonalize_comoving(d, frame(v), g, n);
            for (const auto& b : v == 0.0 ? std::vector{r.plus, r.minus} : std::vector{r.minus})
                EXPECT_LT(std::abs(nearest(s.eigenvalues, b->omega) - b->omega), 1e-5) << "n = " << n;
        }

        // Photon fraction and width against the oracle eigenvectors.
        const auto s = diagonalize_comoving(d, frame(v), g, 1024);
        for (const auto& b : v == 0.0 ? std::vector{r.plus, r.minus} : std::vector{r.minus}) {
            const auto it = std::min_element(s.bound.begin(), s.bound.end(), [&](const auto& x, const auto& y) {
                return std::abs(x.omega - b->omega) < std::abs(y.omega - b->omega);
            });
            ASSERT_NE(it, s.bound.end());
            EXPECT_NEAR(b->photon_fraction, 1.0 - it->atom_weight, 1e-4);
            double w = 0, z2 = 0;
            for (int n = 0; n < 1024; ++n) {
                const double z = std::remainder(static_cast<double>(n), 1024.0);
                w += std::norm(it->photon_sites[n]);
                z2 += z * z * std::norm(it->photon_sites[n]);
            }
            EXPECT_NEAR(b->localization_length, std::sqrt(z2 / w), 1e-2 * b->localization_length);
        }
    }
}

TEST(BoundStates, EdgeStateConvergesAlgebraically)
{
    // The upper state of a moving atom sits next to the zone-edge jump of the
    // tilted band; the oracle approaches it with an error ~ 1/N.
    const auto r = bound_state_frequencies(3.0, frame(0.5), 1.0);
    ASSERT_TRUE(r.plus);
    std::vector<double> err;
    for (int n : {256, 1024, 4096}) {
        const auto s = diagonalize_comoving(3.0, frame(0.5), 1.0, n);
        err.push_back(std::abs(nearest(s.eigenvalues, r.plus->omega) - r.plus->omega));
    }
    EXPECT_LT(err[2], 1e-3);
    EXPECT_NEAR(err[0] / err[1], 4.0, 1.0);
    EXPECT_NEAR(err[1] / err[2], 4.0, 1.0);
}

TEST(BoundStates, ExponentialLocalization)
{
    const auto s = diagonalize_comoving(0.0, frame(0.0), 1.0, 256);
    ASSERT_EQ(s.bound.size(), 2u);
    for (const auto& b : s.bound) {
        std::vector<double> x, y;
        for (int n = 3; n <= 30; ++n) {
            x.push_back(n);
            y.push_back(std::log(std::abs(b.photon_sites[n])));
        }
        const double m = slope(x, y);
        double my = 0, ss_tot = 0, ss_res = 0;
        for (double v : y) my += v;
        my /= y.size();
        const double c = my - m * (x.front() + x.back()) / 2.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            ss_tot += (y[i] - my) * (y[i] - my);
            ss_res += std::pow(y[i] - (m * x[i] + c), 2);
        }
        EXPECT_LT(m, 0.0);
        EXPECT_GT(1.0 - ss_res / ss_tot, 0.99);
    }
}

TEST(Cubic, ClosedFormAtOrigin)
{
    const CubicModelParams p;
    for (double k : {-2.0, -0.5, 0.7, 1.0}) {
        const double s = k > 0 ? 1.0 : -1.0;
        const cplx expected = -cplx(std::sqrt(3.0) * s, 1.0) / (2.0 * k * k);
        EXPECT_LT(std::abs(cubic_I(0.0, k, p) - expected), 1e-14);
    }
    EXPECT_LT(std::abs(cubic_I(60.0, 1.0, p)), 1e-20);
    EXPECT_THROW(cubic_I(1.0, 0.0, p), std::domain_error);
}

TEST(Cubic, ClosedFormMatchesQuadrature)
{
    const CubicModelParams p;
    const std::vector<std::pair<double, double>> kz{
        {1.0, -3.0}, {1.0, -1.0}, {1.0, 0.0},  {1.0, 0.5},  {1.0, 2.0},  {-1.0, -3.0}, {-1.0, -0.4},
        {-1.0, 0.0}, {-1.0, 1.5}, {0.5, -4.0}, {0.5, -0.2}, {0.5, 3.0},  {-0.5, -6.0}, {-0.5, 0.8},
        {2.0, -1.5}, {2.0, 0.25}, {-2.0, -0.7}, {-2.0, 1.0}, {1.5, -2.5}, {-1.5, 0.1}};
    ASSERT_EQ(kz.size(), 20u);
    for (auto [k, z] : kz) {
        const cplx ref = oracle::cubic_I_quadrature(z, k, 1.0);
        const cplx got = cubic_I(z, k, p);
        EXPECT_LT(std::abs(got - ref), 1e-4 * std::abs(ref)) << "k = " << k << " z = " << z << " got " << got
                                                             << " ref " << ref;
    }
}

TEST(Cubic, ScatteringStates)
{
    CubicModelParams p;
    // Free limit.
    p.gbar = 1e-9;
    const std::vector<double> zs{-3.0, 0.0, 2.0};
    const auto free = cubic_scattering_state(0.8, p, zs);
    EXPECT_LT(std::abs(free.gamma_k), 1e-15);
    for (std::size_t i = 0; i < zs.size(); ++i)
        EXPECT_LT(std::abs(free.psi[i] - std::polar(1.0, 0.8 * zs[i]) / std::sqrt(2.0 * pi)), 1e-15);

    p.gbar = 0.2;
    p.delta = 0.05;
    for (double k : {-1.3, -0.4, 0.3, 1.1}) {
        const std::vector<double> far{10.0 / std::abs(k)};
        const auto st = cubic_scattering_state(k, p, far);
        const cplx scattered = st.psi[0] - std::polar(1.0, k * far[0]) / std::sqrt(2.0 * pi);
        EXPECT_LT(std::abs(scattered), 1e-3 / std::sqrt(2.0 * pi)) << "k = " << k;

        // Atom equation: (w~_k - delta) c_e = gbar sqrt(a) psi(0).
        const std::vector<double> origin{0.0};
        const auto s0 = cubic_scattering_state(k, p, origin);
        EXPECT_LT(std::abs((cubic_dispersion(k, p) - p.delta) * s0.c_e - p.gbar * s0.psi[0]), 1e-12);
    }
}

TEST(Cubic, SchrodingerResidual)
{
    // Away from the atom, (w~_k + i J psi''' / 3) psi = 0; third derivative by a
    // 5-point central stencil.
    CubicModelParams p;
    p.gbar = 0.3;
    for (double k : {-0.9, 0.6, 1.4}) {
        const double h = 0.003 / std::abs(k);
        double num = 0.0, den = 0.0;
        for (double z = -8.0 / std::abs(k); z <= 8.0 / std::abs(k); z += 0.37 / std::abs(k)) {
            if (std::abs(z) < 3.0 * h) continue;
            const std::vector<double> zz{z - 2 * h, z - h, z, z + h, z + 2 * h};
            const auto s = cubic_scattering_state(k, p, zz);
            const cplx d3 = (-s.psi[0] + 2.0 * s.psi[1] - 2.0 * s.psi[3] + s.psi[4]) / (2.0 * h * h * h);
            const double w = cubic_dispersion(k, p);
            const cplx r = w * s.psi[2] + cplx(0.0, 1.0) * p.J * d3 / 3.0;
            num += std::norm(r);
            den += std::norm(w * s.psi[2]);
        }
        EXPECT_LT(std::sqrt(num / den), 1e-4) << "k = " << k;
    }
}

TEST(Cubic, SumRule)
{
    for (double delta : {0.0, 0.03, -0.05}) {
        CubicModelParams p;
        p.delta = delta;
        const auto f = [&](double k) { return k == 0.0 ? 0.0 : cubic_weight(k, p); };
        double s = 0.0;
        // Dense GK panels on [-40, 40]; the k^-6 tail beyond is added analytically.
        s += oracle::gk_panels(f, -40.0, 0.0, 4000) + oracle::gk_panels(f, 0.0, 40.0, 4000);
        s += 2.0 * 9.0 * 0.04 / (2.0 * pi * 5.0 * std::pow(40.0, 5));
        EXPECT_NEAR(s, 1.0, 1e-4) << "delta = " << delta;
    }
}

TEST(Cubic, CriticalRates)
{
    const auto r = critical_rates(0.2, 1.0);
    EXPECT_NEAR(r.Omega_c, 0.0889, 1e-4);
    EXPECT_NEAR(r.Gamma_c, 0.0577, 1e-4);
    const double ratio = std::sqrt(5.0 + std::sqrt(5.0)) / (std::sqrt(2.0) * (std::sqrt(5.0) - 1.0));
    for (double g : {0.05, 0.3, 1.7}) {
        const auto a = critical_rates(g, 1.3);
        const auto b = critical_rates(2.0 * g, 1.3);
        EXPECT_NEAR(a.Omega_c / a.Gamma_c, ratio, 1e-12);
        EXPECT_NEAR(b.Gamma_c / a.Gamma_c, std::pow(2.0, 1.2), 1e-12);
        EXPECT_NEAR(b.Omega_c / a.Omega_c, 2.2974, 1e-4);
    }
    EXPECT_THROW(critical_rates(0.0, 1.0), std::invalid_argument);
}

TEST(Cubic, DecayStartsAtOneAndScales)
{
    std::vector<double> lg, lo, lga;
    for (double g : {0.05, 0.1, 0.2, 0.4}) {
        CubicModelParams p;
        p.gbar = g;
        const auto cr = critical_rates(g, 1.0);
        const double T = 3.0 / cr.Gamma_c;
        const auto dc = cubic_decay(p, T, T / 1000.0);
        EXPECT_NEAR(dc.pe.front(), 1.0, 1e-4);
        EXPECT_NEAR(dc.sum_rule, 1.0, 1e-4);
        EXPECT_LT(dc.truncated_weight, 1e-6);
        const auto fit = fit_decay(dc.times, dc.pe, DecayModel::damped_cos2);
        EXPECT_NEAR(fit.Omega, cr.Omega_c, 0.15 * cr.Omega_c);
        lg.push_back(std::log(g));
        lo.push_back(std::log(fit.Omega));
        lga.push_back(std::log(fit.Gamma));
    }
    EXPECT_NEAR(slope(lg, lo), 1.2, 0.05);
    EXPECT_NEAR(slope(lg, lga), 1.2, 0.05);
}

TEST(Cubic, AgreesWithLatticeAtCherenkovPoint)
{
    const CubicModelParams p;
    const auto dc = cubic_decay(p, 100.0, 0.1);
    const std::vector<AtomSpec> at{AtomSpec{-pi, 0.0, 2.0, 0.0, 1.0}};
    const auto out = evolve_effective(BandParams{}, at, EffectiveCoupling{0.2}, light_cone_grid(BandParams{}, at, 100.0),
                                      RunSettings{100.0, 0.01, 10, {}});
    double dev = 0.0;
    for (std::size_t i = 0; i < out.times.size(); ++i) {
        const auto j = static_cast<std::size_t>(std::lround(out.times[i] / 0.1));
        dev = std::max(dev, std::abs(out.pe[0][i] - dc.pe.at(j)));
    }
    EXPECT_LT(dev, 0.03);
}
