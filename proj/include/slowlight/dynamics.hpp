#pragma once

// Single-excitation dynamics of N atoms on classical trajectories coupled to a
// tight-binding photonic band.
//
// Two models are provided:
//  * evolve_effective: the unit-cell averaged coupling gbar, evolved in k-space
//    in the interaction picture (exact e^{-i omega_k t} photon phases);
//  * evolve_full: the site-resolved coupling g * w(z_i(t) - z_n) with a Gaussian
//    Wannier profile of width z0, evolved in the site basis.
// Both use fixed-step classical RK4. State is |psi> = [sum_i c_i s+_i + sum psi a+]|g,vac>.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "band.hpp"
#include "detail/fft.hpp"

namespace slowlight {

using cplx = std::complex<double>;
inline constexpr cplx I{0.0, 1.0};

struct AtomSpec {
    double delta = 0.0;   // omega_a - omega_0
    double z_init = 0.0;  // position at t = 0 (continuous)
    double v = 0.0;       // velocity
    double gamma_a = 0.0; // excited-state loss rate
    cplx initial_amplitude{0.0, 0.0};

    double position(double t) const { return z_init + v * t; }
};

struct EffectiveCoupling {
    double gbar = 0.0;
};

/// Site-resolved coupling g with Gaussian Wannier profile of width z0.
struct FullCoupling {
    double g = 0.0;
    double z0 = 0.1;

    /// Cell average of g * w(z): g * sqrt(2 z0 / a) * pi^{1/4}.
    double gbar_equivalent(double a) const { return g * std::sqrt(2.0 * z0 / a) * std::pow(pi, 0.25); }

    /// Wannier profile pi^{-1/4} sqrt(a/z0) exp(-x^2 / 2 z0^2), truncated beyond 6 z0.
    double wannier(double x, double a) const
    {
        if (std::abs(x) > 6.0 * z0) return 0.0;
        return std::pow(pi, -0.25) * std::sqrt(a / z0) * std::exp(-x * x / (2.0 * z0 * z0));
    }

    void validate(double a) const
    {
        if (!(g >= 0.0)) throw std::invalid_argument("coupling: g must be >= 0");
        if (!(z0 > 0.0)) throw std::invalid_argument("coupling: z0 must be > 0");
        if (!(z0 < 0.5 * a)) throw std::invalid_argument("coupling: z0 must be < a/2 (tight-binding limit)");
    }
};

using CouplingSpec = std::variant<EffectiveCoupling, FullCoupling>;

/// Periodic lattice of n_sites cells; modes k_j = 2 pi j / L, j = -N/2+1 .. N/2.
struct LatticeGrid {
    int n_sites = 0;
    double a = 1.0;

    double length() const { return n_sites * a; }
    /// Wavevector of mode index m in [0, N): j = m - N/2 + 1.
    double k(int m) const { return 2.0 * pi * (m - n_sites / 2 + 1) / length(); }
    /// Minimal-image displacement in [-L/2, L/2).
    double wrap(double x) const
    {
        const double L = length();
        double r = std::fmod(x + 0.5 * L, L);
        if (r < 0.0) r += L;
        return r - 0.5 * L;
    }

    void validate() const
    {
        if (n_sites < 2) throw std::invalid_argument("grid: n_sites must be >= 2");
        if (n_sites % 2 != 0) throw std::invalid_argument("grid: n_sites must be even, got " + std::to_string(n_sites));
        if (!(a > 0.0)) throw std::invalid_argument("grid: a must be > 0");
    }
};

struct RunSettings {
    double t_max = 0.0;
    double dt = 0.01;
    int record_every = 10; // steps between recorded samples
    std::vector<double> snapshot_times;
};

struct DisorderSpec {
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    int n_realizations = 1;
};

struct Snapshot {
    double time = 0.0;
    std::vector<cplx> psi; // amplitude on sites z_n = n a, n = 0..N-1
};

struct RunManifest {
    std::string model;
    BandParams band;
    std::vector<AtomSpec> atoms;
    CouplingSpec coupling;
    LatticeGrid grid;
    RunSettings run;
    double dt_used = 0.0;
    long n_steps = 0;
    std::optional<double> disorder_epsilon;
};

struct SimOutput {
    std::vector<double> times;
    std::vector<std::vector<double>> pe; // pe[atom][sample]
    std::vector<double> norm;
    std::vector<Snapshot> snapshots;
    RunManifest manifest;
};

// ---------------------------------------------------------------------------
// Grid helpers

/// Smallest even n_sites satisfying cbar * t_max < L / 2.
inline int min_sites_for(const BandParams& band, double t_max)
{
    int n = static_cast<int>(std::floor(2.0 * band.cbar() * t_max / band.a)) + 1;
    if (n % 2) ++n;
    return std::max(n, 2);
}

/// Power-of-two grid long enough to hold the backward and forward light cones
/// of every trajectory without wrap-around.
inline LatticeGrid light_cone_grid(const BandParams& band, std::span<const AtomSpec> atoms, double t_max)
{
    double vmax = 0.0, zmin = 0.0, zmax = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        vmax = std::max(vmax, std::abs(atoms[i].v));
        zmin = i == 0 ? atoms[i].z_init : std::min(zmin, atoms[i].z_init);
        zmax = i == 0 ? atoms[i].z_init : std::max(zmax, atoms[i].z_init);
    }
    const double span = (2.0 * band.cbar() + vmax) * t_max + (zmax - zmin) + 64.0 * band.a;
    int n = 64;
    while (n * band.a < span || n < min_sites_for(band, t_max)) n *= 2;
    return LatticeGrid{n, band.a};
}

namespace detail {

/// Unitary lattice Fourier transform between the mode grid and sites.
class LatticeFourier {
public:
    explicit LatticeFourier(const LatticeGrid& grid)
        : n_(grid.n_sites), fft_(static_cast<std::size_t>(grid.n_sites)), shift_(n_), buf_(n_)
    {
        // k_j z_n = 2 pi (m + 1 - N/2) n / N
        for (int n = 0; n < n_; ++n) {
            const double ph = 2.0 * pi * static_cast<double>(1 - n_ / 2) * n / n_;
            shift_[n] = std::polar(1.0 / std::sqrt(static_cast<double>(n_)), ph);
        }
    }

    void to_sites(std::span<const cplx> psi_k, std::span<cplx> psi_n)
    {
        fft_.backward(psi_k, buf_);
        for (int n = 0; n < n_; ++n) psi_n[n] = buf_[n] * shift_[n];
    }

    void to_modes(std::span<const cplx> psi_n, std::span<cplx> psi_k)
    {
        for (int n = 0; n < n_; ++n) buf_[n] = psi_n[n] * std::conj(shift_[n]);
        fft_.forward(buf_, psi_k);
    }

private:
    int n_;
    FftPair fft_;
    std::vector<cplx> shift_;
    std::vector<cplx> buf_;
};

inline void check_run(const BandParams& band, std::span<const AtomSpec> atoms, const LatticeGrid& grid,
                      const RunSettings& run)
{
    band.validate();
    grid.validate();
    if (atoms.empty()) throw std::invalid_argument("evolve: at least one atom is required");
    if (std::abs(grid.a - band.a) > 1e-12 * band.a)
        throw std::invalid_argument("evolve: grid lattice constant differs from band lattice constant");
    if (!(run.t_max > 0.0)) throw std::invalid_argument("evolve: t_max must be > 0");
    if (!(run.dt > 0.0) || run.dt > 0.02 / band.J + 1e-15)
        throw std::invalid_argument("evolve: dt must be in (0, 0.02/J]");
    if (run.record_every < 1) throw std::invalid_argument("evolve: record_every must be >= 1");
    if (!(band.cbar() * run.t_max < 0.5 * grid.length()))
        throw std::invalid_argument("evolve: light cone wraps around the lattice (cbar * t_max >= L/2); "
                                    "requires n_sites >= " +
                                    std::to_string(min_sites_for(band, run.t_max)));
    for (const auto& at : atoms)
        if (!(at.gamma_a >= 0.0)) throw std::invalid_argument("evolve: gamma_a must be >= 0");
}

inline std::vector<cplx> initial_atoms(std::span<const AtomSpec> atoms)
{
    std::vector<cplx> c(atoms.size());
    bool any = false;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        c[i] = atoms[i].initial_amplitude;
        any = any || std::norm(c[i]) > 0.0;
    }
    if (!any) c[0] = 1.0;
    return c;
}

// Bookkeeping shared by both integrators: step count, sampling and snapshots.
struct Schedule {
    long n_steps = 0;
    double dt = 0.0;
    std::vector<long> snapshot_steps;

    Schedule(const RunSettings& run)
    {
        n_steps = std::max(1L, std::lround(run.t_max / run.dt));
        dt = run.t_max / static_cast<double>(n_steps);
        for (double ts : run.snapshot_times) {
            if (ts < 0.0 || ts > run.t_max * (1.0 + 1e-12))
                throw std::invalid_argument("evolve: snapshot time " + std::to_string(ts) + " outside [0, t_max]");
            // Snapshots land on recorded samples.
            long rec = std::lround(ts / (dt * run.record_every));
            long step = std::min(n_steps, rec * run.record_every);
            snapshot_steps.push_back(step);
        }
    }

    bool records(long step, int every) const { return step % every == 0 || step == n_steps; }
    bool snapshots_at(long step) const
    {
        return std::find(snapshot_steps.begin(), snapshot_steps.end(), step) != snapshot_steps.end();
    }
};

inline void record(SimOutput& out, double t, std::span<const cplx> c, double photon_norm)
{
    out.times.push_back(t);
    double n = photon_norm;
    for (std::size_t i = 0; i < c.size(); ++i) {
        out.pe[i].push_back(std::norm(c[i]));
        n += std::norm(c[i]);
    }
    out.norm.push_back(n);
}

inline double sum_norm(std::span<const cplx> x)
{
    double s = 0.0;
    for (const auto& v : x) s += std::norm(v);
    return s;
}

} // namespace detail

/// Position-space amplitudes psi(z_n) = N^{-1/2} sum_j psi_kj e^{i k_j z_n}.
inline std::vector<cplx> to_position(std::span<const cplx> psi_k, const LatticeGrid& grid)
{
    grid.validate();
    if (psi_k.size() != static_cast<std::size_t>(grid.n_sites))
        throw std::invalid_argument("to_position: state length differs from n_sites");
    detail::LatticeFourier ft(grid);
    std::vector<cplx> out(grid.n_sites);
    ft.to_sites(psi_k, out);
    return out;
}

/// Inverse of to_position.
inline std::vector<cplx> to_momentum(std::span<const cplx> psi_n, const LatticeGrid& grid)
{
    grid.validate();
    if (psi_n.size() != static_cast<std::size_t>(grid.n_sites))
        throw std::invalid_argument("to_momentum: state length differs from n_sites");
    detail::LatticeFourier ft(grid);
    std::vector<cplx> out(grid.n_sites);
    ft.to_modes(psi_n, out);
    return out;
}

/// On-site frequency offsets, i.i.d. uniform on [-eps/2, eps/2]; deterministic
/// in (seed, realization_index) and independent of the standard library.
inline std::vector<double> sample_disorder(const DisorderSpec& spec, int realization_index, int n_sites)
{
    if (!(spec.epsilon >= 0.0)) throw std::invalid_argument("disorder: epsilon must be >= 0");
    if (n_sites < 0) throw std::invalid_argument("disorder: n_sites must be >= 0");
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(realization_index), 0x5eed1u};
    std::mt19937_64 rng(seq);
    std::vector<double> out(n_sites);
    for (auto& x : out) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53; // [0, 1)
        x = spec.epsilon * (u - 0.5);
    }
    return out;
}

/// Effective continuum model in k-space (interaction picture):
///   dc_i/dt = -(gamma_a/2) c_i - i gbar sqrt(a/L) sum_k e^{i(k z_i(t) + (delta_i - omega_k) t)} b_k
///   db_k/dt = -(gamma_p/2) b_k - i gbar sqrt(a/L) sum_i e^{-i(...)} c_i  [- i (disorder)]
/// Optional on-site disorder is applied in the site basis via FFT.
inline SimOutput evolve_effective(const BandParams& band, std::span<const AtomSpec> atoms,
                                  const EffectiveCoupling& coupling, const LatticeGrid& grid,
                                  const RunSettings& run, std::span<const double> disorder = {})
{
    detail::check_run(band, atoms, grid, run);
    if (!(coupling.gbar >= 0.0)) throw std::invalid_argument("evolve_effective: gbar must be >= 0");
    const int N = grid.n_sites;
    const bool disordered = !disorder.empty();
    if (disordered && disorder.size() != static_cast<std::size_t>(N))
        throw std::invalid_argument("evolve_effective: disorder realization length " +
                                    std::to_string(disorder.size()) + " differs from n_sites " +
                                    std::to_string(N));
    const std::size_t na = atoms.size();
    const detail::Schedule sched(run);
    const double h = sched.dt;
    const double coup = coupling.gbar * std::sqrt(grid.a / grid.length());

    std::vector<double> omega(N), kk(N);
    for (int m = 0; m < N; ++m) {
        kk[m] = grid.k(m);
        omega[m] = -2.0 * band.J * std::cos(kk[m] * grid.a);
    }
    // phase(i, m, t) = exp(i (k z_i0 + theta t)), theta = k v_i + delta_i - omega_k
    std::vector<double> theta(na * N), base(na * N);
    for (std::size_t i = 0; i < na; ++i)
        for (int m = 0; m < N; ++m) {
            theta[i * N + m] = kk[m] * atoms[i].v + atoms[i].delta - omega[m];
            base[i * N + m] = kk[m] * atoms[i].z_init;
        }
    std::vector<cplx> P(na * N), Pmid(na * N), Pend(na * N), Hhalf(na * N);
    for (std::size_t x = 0; x < na * N; ++x) Hhalf[x] = std::polar(1.0, 0.5 * theta[x] * h);
    const auto resync = [&](double t) {
        for (std::size_t x = 0; x < na * N; ++x) P[x] = std::polar(1.0, base[x] + theta[x] * t);
    };

    // Lab-frame photon phases exp(-i omega_k t), only needed for disorder and snapshots.
    std::vector<cplx> E(N), Emid(N), Eend(N), Ehalf(N);
    for (int m = 0; m < N; ++m) Ehalf[m] = std::polar(1.0, -0.5 * omega[m] * h);
    const auto resync_lab = [&](double t) {
        for (int m = 0; m < N; ++m) E[m] = std::polar(1.0, -omega[m] * t);
    };

    std::optional<detail::LatticeFourier> ft;
    std::vector<cplx> work_k, work_n;
    if (disordered) {
        ft.emplace(grid);
        work_k.resize(N);
        work_n.resize(N);
    }

    // Atom amplitudes in the interaction picture c_i e^{i delta_i t}; |c|^2 unchanged.
    std::vector<cplx> c = detail::initial_atoms(atoms);
    std::vector<cplx> b(N, cplx{});

    const double gp = 0.5 * band.gamma_p;
    const auto rhs = [&](std::span<const cplx> Ph, std::span<const cplx> Eph, std::span<const cplx> cc,
                         std::span<const cplx> bb, std::span<cplx> dc, std::span<cplx> db) {
        for (int m = 0; m < N; ++m) db[m] = -gp * bb[m];
        for (std::size_t i = 0; i < na; ++i) {
            const cplx* ph = &Ph[i * N];
            cplx acc{};
            for (int m = 0; m < N; ++m) acc += ph[m] * bb[m];
            dc[i] = -0.5 * atoms[i].gamma_a * cc[i] - I * coup * acc;
            const cplx ci = -I * coup * cc[i];
            for (int m = 0; m < N; ++m) db[m] += std::conj(ph[m]) * ci;
        }
        if (disordered) {
            for (int m = 0; m < N; ++m) work_k[m] = Eph[m] * bb[m];
            ft->to_sites(work_k, work_n);
            for (int n = 0; n < N; ++n) work_n[n] *= disorder[n];
            ft->to_modes(work_n, work_k);
            for (int m = 0; m < N; ++m) db[m] += -I * std::conj(Eph[m]) * work_k[m];
        }
    };

    SimOutput out;
    out.pe.resize(na);
    out.manifest = RunManifest{"effective", band, {atoms.begin(), atoms.end()}, coupling, grid, run, h,
                               sched.n_steps, std::nullopt};
    if (disordered) {
        double eps = 0.0;
        for (double d : disorder) eps = std::max(eps, 2.0 * std::abs(d));
        out.manifest.disorder_epsilon = eps;
    }

    const auto snapshot = [&](double t) {
        std::vector<cplx> lab(N);
        for (int m = 0; m < N; ++m) lab[m] = b[m] * std::polar(1.0, -omega[m] * t);
        out.snapshots.push_back(Snapshot{t, to_position(lab, grid)});
    };

    std::vector<cplx> k1c(na), k2c(na), k3c(na), k4c(na), tc(na);
    std::vector<cplx> k1b(N), k2b(N), k3b(N), k4b(N), tb(N);

    resync(0.0);
    resync_lab(0.0);
    detail::record(out, 0.0, c, 0.0);
    if (sched.snapshots_at(0)) snapshot(0.0);

    for (long step = 1; step <= sched.n_steps; ++step) {
        for (std::size_t x = 0; x < na * N; ++x) {
            Pmid[x] = P[x] * Hhalf[x];
            Pend[x] = Pmid[x] * Hhalf[x];
        }
        if (disordered)
            for (int m = 0; m < N; ++m) {
                Emid[m] = E[m] * Ehalf[m];
                Eend[m] = Emid[m] * Ehalf[m];
            }

        rhs(P, E, c, b, k1c, k1b);
        for (std::size_t i = 0; i < na; ++i) tc[i] = c[i] + 0.5 * h * k1c[i];
        for (int m = 0; m < N; ++m) tb[m] = b[m] + 0.5 * h * k1b[m];
        rhs(Pmid, Emid, tc, tb, k2c, k2b);
        for (std::size_t i = 0; i < na; ++i) tc[i] = c[i] + 0.5 * h * k2c[i];
        for (int m = 0; m < N; ++m) tb[m] = b[m] + 0.5 * h * k2b[m];
        rhs(Pmid, Emid, tc, tb, k3c, k3b);
        for (std::size_t i = 0; i < na; ++i) tc[i] = c[i] + h * k3c[i];
        for (int m = 0; m < N; ++m) tb[m] = b[m] + h * k3b[m];
        rhs(Pend, Eend, tc, tb, k4c, k4b);
        for (std::size_t i = 0; i < na; ++i) c[i] += h / 6.0 * (k1c[i] + 2.0 * k2c[i] + 2.0 * k3c[i] + k4c[i]);
        for (int m = 0; m < N; ++m) b[m] += h / 6.0 * (k1b[m] + 2.0 * k2b[m] + 2.0 * k3b[m] + k4b[m]);

        const double t = step * h;
        if (step % 256 == 0) {
            resync(t);
            if (disordered) resync_lab(t);
        } else {
            std::swap(P, Pend);
            if (disordered) std::swap(E, Eend);
        }
        if (sched.records(step, run.record_every)) detail::record(out, t, c, detail::sum_norm(b));
        if (sched.snapshots_at(step)) snapshot(t);
    }
    return out;
}

/// Full model in the site basis:
///   dpsi_n/dt = -i [eps_n psi_n - J (psi_{n+1} + psi_{n-1})] - (gamma_p/2) psi_n - i g sum_i w(z_i(t) - z_n) c_i
///   dc_i/dt   = -i delta_i c_i - (gamma_a/2) c_i - i g sum_n w(z_i(t) - z_n) psi_n
/// with minimal-image distances on the periodic lattice.
inline SimOutput evolve_full(const BandParams& band, std::span<const AtomSpec> atoms, const FullCoupling& coupling,
                             const LatticeGrid& grid, const RunSettings& run, std::span<const double> disorder = {})
{
    detail::check_run(band, atoms, grid, run);
    coupling.validate(grid.a);
    const int N = grid.n_sites;
    const bool disordered = !disorder.empty();
    if (disordered && disorder.size() != static_cast<std::size_t>(N))
        throw std::invalid_argument("evolve_full: disorder realization length " + std::to_string(disorder.size()) +
                                    " differs from n_sites " + std::to_string(N));
    const std::size_t na = atoms.size();
    const detail::Schedule sched(run);
    const double h = sched.dt;
    const double J = band.J;
    const double gp = 0.5 * band.gamma_p;

    struct Tap {
        int site;
        double w;
    };
    const int reach = static_cast<int>(std::ceil(6.0 * coupling.z0 / grid.a)) + 1;
    const auto taps_at = [&](double t, std::vector<std::vector<Tap>>& taps) {
        for (std::size_t i = 0; i < na; ++i) {
            taps[i].clear();
            const double z = atoms[i].position(t);
            const long centre = std::lround(z / grid.a);
            for (long n = centre - reach; n <= centre + reach; ++n) {
                const double x = grid.wrap(z - n * grid.a);
                const double w = coupling.wannier(x, grid.a);
                if (w == 0.0) continue;
                long site = n % N;
                if (site < 0) site += N;
                taps[i].push_back({static_cast<int>(site), coupling.g * w});
            }
        }
    };

    std::vector<cplx> c = detail::initial_atoms(atoms);
    std::vector<cplx> psi(N, cplx{});

    const auto rhs = [&](const std::vector<std::vector<Tap>>& taps, std::span<const cplx> cc,
                         std::span<const cplx> pp, std::span<cplx> dc, std::span<cplx> dp) {
        for (int n = 0; n < N; ++n) {
            const cplx hop = pp[n == 0 ? N - 1 : n - 1] + pp[n == N - 1 ? 0 : n + 1];
            const double onsite = disordered ? disorder[n] : 0.0;
            dp[n] = -I * (onsite * pp[n] - J * hop) - gp * pp[n];
        }
        for (std::size_t i = 0; i < na; ++i) {
            cplx acc{};
            const cplx ci = -I * cc[i];
            for (const auto& tp : taps[i]) {
                acc += tp.w * pp[tp.site];
                dp[tp.site] += tp.w * ci;
            }
            dc[i] = (-I * atoms[i].delta - 0.5 * atoms[i].gamma_a) * cc[i] - I * acc;
        }
    };

    SimOutput out;
    out.pe.resize(na);
    out.manifest = RunManifest{"full", band, {atoms.begin(), atoms.end()}, coupling, grid, run, h,
                               sched.n_steps, std::nullopt};
    if (disordered) {
        double eps = 0.0;
        for (double d : disorder) eps = std::max(eps, 2.0 * std::abs(d));
        out.manifest.disorder_epsilon = eps;
    }

    std::vector<std::vector<Tap>> t0(na), tm(na), t1(na);
    std::vector<cplx> k1c(na), k2c(na), k3c(na), k4c(na), tc(na);
    std::vector<cplx> k1p(N), k2p(N), k3p(N), k4p(N), tp(N);

    detail::record(out, 0.0, c, 0.0);
    if (sched.snapshots_at(0)) out.snapshots.push_back(Snapshot{0.0, psi});
    taps_at(0.0, t0);

    for (long step = 1; step <= sched.n_steps; ++step) {
        const double t = (step - 1) * h;
        taps_at(t + 0.5 * h, tm);
        taps_at(t + h, t1);

        rhs(t0, c, psi, k1c, k1p);
        for (std::size_t i = 0; i < na; ++i) tc[i] = c[i] + 0.5 * h * k1c[i];
        for (int n = 0; n < N; ++n) tp[n] = psi[n] + 0.5 * h * k1p[n];
        rhs(tm, tc, tp, k2c, k2p);
        for (std::size_t i = 0; i < na; ++i) tc[i] = c[i] + 0.5 * h * k2c[i];
        for (int n = 0; n < N; ++n) tp[n] = psi[n] + 0.5 * h * k2p[n];
        rhs(tm, tc, tp, k3c, k3p);
        for (std::size_t i = 0; i < na; ++i) tc[i] = c[i] + h * k3c[i];
        for (int n = 0; n < N; ++n) tp[n] = psi[n] + h * k3p[n];
        rhs(t1, tc, tp, k4c, k4p);
        for (std::size_t i = 0; i < na; ++i) c[i] += h / 6.0 * (k1c[i] + 2.0 * k2c[i] + 2.0 * k3c[i] + k4c[i]);
        for (int n = 0; n < N; ++n) psi[n] += h / 6.0 * (k1p[n] + 2.0 * k2p[n] + 2.0 * k3p[n] + k4p[n]);
        std::swap(t0, t1);

        const double tn = step * h;
        if (sched.records(step, run.record_every)) detail::record(out, tn, c, detail::sum_norm(psi));
        if (sched.snapshots_at(step)) out.snapshots.push_back(Snapshot{tn, psi});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Observables

struct Observables {
    std::vector<double> times;
    std::vector<double> pe;
    std::vector<double> snapshot_times;
    std::vector<double> left_fraction;  // photon weight behind (z < z_atom) the atom
    std::vector<double> right_fraction;
    /// Retardation |d_ij / (v_g(k) - v)| to every other atom j (0 for j == i,
    /// +inf when no resonant mode propagates towards j).
    std::vector<double> retardation;
};

/// Photon weight on either side of the instantaneous atom position for one snapshot.
inline std::pair<double, double> side_fractions(const Snapshot& snap, const LatticeGrid& grid, double z_atom)
{
    double left = 0.0, right = 0.0;
    for (int n = 0; n < grid.n_sites; ++n) {
        const double w = std::norm(snap.psi[n]);
        const double d = grid.wrap(n * grid.a - z_atom);
        if (d < 0.0) left += w;
        else if (d > 0.0) right += w;
        else { left += 0.5 * w; right += 0.5 * w; }
    }
    const double tot = left + right;
    if (tot <= 0.0) return {0.0, 0.0};
    return {left / tot, right / tot};
}

/// Retardation time for a photon emitted by atom `from` to reach a partner at
/// signed initial separation d (partner minus emitter), using the fastest
/// resonant mode whose co-moving group velocity points towards the partner.
inline double retardation_time(double d, const AtomSpec& from, const BandParams& band)
{
    if (d == 0.0) return 0.0;
    const ComovingFrame frame{band, from.v};
    double best = 0.0;
    for (const auto& r : resonant_wavevectors(from.delta, frame)) {
        const bool towards = d < 0 ? (r.k < 0 && r.vg_comoving < 0) : (r.k > 0 && r.vg_comoving > 0);
        if (towards) best = std::max(best, std::abs(r.vg_comoving));
    }
    if (best == 0.0) return std::numeric_limits<double>::infinity();
    return std::abs(d / best);
}

inline Observables observables(const SimOutput& out, std::size_t atom_index)
{
    const auto& man = out.manifest;
    if (atom_index >= man.atoms.size()) throw std::out_of_range("observables: atom index out of range");
    if (out.snapshots.empty()) throw std::invalid_argument("observables: run has no snapshots");
    Observables obs;
    obs.times = out.times;
    obs.pe = out.pe[atom_index];
    const auto& atom = man.atoms[atom_index];
    for (const auto& s : out.snapshots) {
        auto [l, r] = side_fractions(s, man.grid, atom.position(s.time));
        obs.snapshot_times.push_back(s.time);
        obs.left_fraction.push_back(l);
        obs.right_fraction.push_back(r);
    }
    for (std::size_t j = 0; j < man.atoms.size(); ++j)
        obs.retardation.push_back(j == atom_index
                                      ? 0.0
                                      : retardation_time(man.atoms[j].z_init - atom.z_init, atom, man.band));
    return obs;
}

} // namespace slowlight
