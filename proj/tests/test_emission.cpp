#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "slowlight/emission.hpp"

using namespace slowlight;

namespace {

ComovingFrame frame(double v) { return ComovingFrame{BandParams{}, v}; }

std::vector<double> linspace(double lo, double hi, int n)
{
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = lo + (hi - lo) * i / (n - 1);
    return x;
}

} // namespace

TEST(Emission, StaticGoldenRule)
{
    const auto r = emission_rates(0.0, frame(0.0), 0.2, 1e-3);
    EXPECT_NEAR(r.gamma_L, 0.02, 0.01 * 0.02);
    EXPECT_NEAR(r.gamma_R, 0.02, 0.01 * 0.02);
    EXPECT_NEAR(r.gamma_L, r.gamma_R, 1e-12);
    EXPECT_THROW(emission_rates(0.0, frame(0.0), 0.2, 0.0), std::invalid_argument);
}

TEST(Emission, MovingGoldenRuleLimit)
{
    // gbar^2 a / |v~_g| at each simple root, located by an independent dense scan.
    const double v = 0.6, delta = 0.7, g = 0.15;
    double gl = 0.0, gr = 0.0;
    const int n = 400000;
    double prev = -2.0 * std::cos(-pi) + v * pi - delta;
    for (int j = 1; j <= n; ++j) {
        const double k = -pi + 2.0 * pi * j / n;
        const double f = -2.0 * std::cos(k) - v * k - delta;
        if ((f > 0) != (prev > 0)) (k < 0 ? gl : gr) += g * g / std::abs(2.0 * std::sin(k) - v);
        prev = f;
    }
    const auto r = emission_rates(delta, frame(v), g, 1e-4);
    // Lorentzian tails leave a residue of order gbar^2 gamma_p on a side without roots.
    ASSERT_GT(gl, 0.0);
    EXPECT_EQ(gr, 0.0);
    EXPECT_NEAR(r.gamma_L, gl, 0.01 * gl);
    EXPECT_LT(r.gamma_R, 1e-5);
}

TEST(Emission, MirrorRelations)
{
    for (double d : {-2.5, -1.0, 0.0, 1.5, 3.0})
        for (double v : {0.4, 1.0, 2.5}) {
            const auto a = emission_rates(d, frame(v), 0.2, 0.01);
            const auto b = emission_rates(d, frame(-v), 0.2, 0.01);
            EXPECT_NEAR(a.gamma_L, b.gamma_R, 1e-9 * std::max(1.0, a.gamma_L));
            const auto da = directionality(d, frame(v), 0.2, 0.01);
            const auto db = directionality(d, frame(-v), 0.2, 0.01);
            EXPECT_NEAR(da.D, -db.D, 1e-8);
        }
}

TEST(Emission, Directionality)
{
    EXPECT_NEAR(directionality(0.3, frame(0.0), 0.2, 0.01).D, 0.0, 1e-12);
    EXPECT_GE(directionality(2.0, frame(1.0), 0.2, 0.01).D, 0.95);
    // Above cbar, the sign of D flips across delta = -2J.
    for (double v : {2.5, 3.0}) {
        const double below = directionality(-2.3, frame(v), 0.2, 0.01).D;
        const double above = directionality(-1.7, frame(v), 0.2, 0.01).D;
        EXPECT_LT(below * above, 0.0) << "v = " << v;
    }
    const auto off = directionality(50.0, frame(0.0), 1e-6, 1e-12);
    EXPECT_TRUE(off.off_band);
    EXPECT_EQ(off.D, 0.0);
}

TEST(Emission, WeakCouplingMatchesSimulation)
{
    // gbar = 0.1 at in-band detunings with fast roots.
    for (auto [delta, v] : std::vector<std::pair<double, double>>{{0.5, 0.0}, {1.0, 0.5}}) {
        const auto f = frame(v);
        for (const auto& r : resonant_wavevectors(delta, f)) ASSERT_GE(std::abs(r.vg_comoving), 0.4);
        const std::vector<AtomSpec> at{AtomSpec{delta, 0.0, v, 0.0, 1.0}};
        const double T = 300.0;
        const auto out = evolve_effective(BandParams{}, at, EffectiveCoupling{0.1}, light_cone_grid(BandParams{}, at, T),
                                          RunSettings{T, 0.02, 10, {}});
        const auto fit = fit_decay(out.times, out.pe[0], DecayModel::exponential);
        const double expected = emission_rates(delta, f, 0.1, 1e-4).total();
        EXPECT_NEAR(fit.Gamma, expected, 0.1 * expected) << "delta = " << delta << " v = " << v;
    }
}

TEST(Emission, ValidityBound)
{
    // Independent evaluation of the condition on a fine grid.
    for (double d : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        double m = 0.0;
        for (int j = 0; j <= 100000; ++j) {
            const double k = -pi + 2.0 * pi * j / 100000;
            m = std::max(m, std::abs((d + 2.0 * std::cos(k)) / (1.0 - k / (2.0 * pi))));
        }
        const auto b = validity_min_velocity(d, BandParams{});
        EXPECT_NEAR(b.v_min, m / (2.0 * pi), 1e-5) << "delta = " << d;
        EXPECT_NEAR(b.v_min_over_cbar, b.v_min / 2.0, 1e-15);
        EXPECT_GT(b.v_min_over_cbar, 0.1);
        EXPECT_LT(b.v_min_over_cbar, 0.7);
    }
    // Joint homogeneity in (delta, J).
    const auto a = validity_min_velocity(0.8, BandParams{1.0, 1.0, 0.0});
    const auto b = validity_min_velocity(2.4, BandParams{3.0, 1.0, 0.0});
    EXPECT_NEAR(b.v_min, 3.0 * a.v_min, 1e-12);
}

TEST(Emission, Sidebands)
{
    const auto fast = sideband_classifier(2.0, frame(1.0), 0.2, 0.01);
    ASSERT_EQ(fast.size(), 5u);
    for (const auto& s : fast)
        if (std::abs(s.n) == 1) {
            EXPECT_FALSE(s.in_band) << "n = " << s.n;
        }
    for (const auto& s : sideband_classifier(0.0, frame(40.0), 0.2, 0.01))
        if (s.n != 0) {
            EXPECT_FALSE(s.in_band);
        }

    // delta = -2J: the n = +1 channel meets the local maximum of the tilted band
    // (a van Hove divergence) at v* ~ 0.215 cbar, found here by bisection on
    // -2 + 2 pi v = w~(pi - asin(v/2)).
    const auto mismatch = [](double v) {
        const double k = pi - std::asin(0.5 * v);
        return -2.0 + 2.0 * pi * v - (-2.0 * std::cos(k) - v * k);
    };
    double lo = 0.3, hi = 0.6;
    for (int i = 0; i < 100; ++i) (mismatch(0.5 * (lo + hi)) > 0 ? hi : lo) = 0.5 * (lo + hi);
    EXPECT_NEAR(lo / 2.0, 0.22, 0.01);
    const auto kink = sideband_classifier(-2.0, frame(lo * (1.0 - 1e-4)), 0.2, 0.01);
    const auto& up = kink[3];
    ASSERT_EQ(up.n, 1);
    EXPECT_TRUE(up.in_band);
    const double plain = 2.0 * pi * 0.04 * dos_comoving(0.0, frame(0.0), 0.01);
    EXPECT_GT(up.rate_estimate, 3.0 * plain);
}

TEST(Emission, SidebandWeights)
{
    // Fourier coefficient of a Gaussian: exp(-(2 pi n z0 / a)^2 / 2) in amplitude.
    const FullCoupling fc{0.2, 0.1};
    for (int n : {0, 1, 2}) {
        const double q = 2.0 * pi * n * fc.z0;
        EXPECT_NEAR(sideband_weight(n, fc, 1.0), std::exp(-q * q), 1e-8);
    }
    const auto s = sideband_classifier(1.0, frame(1.0), 0.2, 0.01, fc);
    EXPECT_NEAR(s[3].weight, std::exp(-std::pow(2.0 * pi * 0.1, 2)), 1e-8);
}

TEST(Emission, Discrepancy)
{
    const std::vector<AtomSpec> at{AtomSpec{0.5, 0.0, 0.8, 0.0, 1.0}};
    const LatticeGrid grid{256, 1.0};
    const auto a = evolve_effective(BandParams{}, at, EffectiveCoupling{0.2}, grid, RunSettings{30.0, 0.01, 10, {}});
    EXPECT_EQ(discrepancy(a, a, 30.0), 0.0);
    EXPECT_THROW(discrepancy(a, a, 31.0), std::invalid_argument);
}

TEST(Emission, FitSynthetic)
{
    const auto t = linspace(0.0, 100.0, 1001);
    std::vector<double> e(t.size()), c(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        e[i] = std::exp(-0.04 * t[i]);
        c[i] = std::pow(std::cos(0.0889 * t[i]), 2) * std::exp(-0.0577 * t[i]);
    }
    const auto fe = fit_decay(t, e, DecayModel::exponential);
    EXPECT_NEAR(fe.Gamma, 0.04, 1e-6);
    const auto fc = fit_decay(t, c, DecayModel::damped_cos2);
    EXPECT_NEAR(fc.Omega, 0.0889, 1e-6);
    EXPECT_NEAR(fc.Gamma, 0.0577, 1e-6);
    EXPECT_LT(fc.rms_residual, 1e-6);
    EXPECT_THROW(fit_decay(std::vector<double>(10, 0.0), std::vector<double>(10, 1.0), DecayModel::exponential),
                 std::invalid_argument);
}
