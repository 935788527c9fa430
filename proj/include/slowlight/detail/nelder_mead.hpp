#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>

namespace slowlight::detail {

template <std::size_t N>
struct SimplexResult {
    std::array<double, N> x{};
    double fx = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Nelder-Mead downhill simplex with standard coefficients. Stops when every
/// vertex lies within xtol (absolute + relative) of the best one, or when the
/// function values agree to ftol relative and the simplex is within sqrt(xtol).
template <std::size_t N, class F>
SimplexResult<N> nelder_mead(F&& f, std::array<double, N> x0, std::array<double, N> step, double xtol,
                             double ftol, int max_iter)
{
    std::array<std::array<double, N>, N + 1> s;
    std::array<double, N + 1> fs;
    s[0] = x0;
    for (std::size_t i = 0; i < N; ++i) {
        s[i + 1] = x0;
        s[i + 1][i] += step[i];
    }
    for (std::size_t i = 0; i <= N; ++i) fs[i] = f(s[i]);

    SimplexResult<N> res;
    std::array<std::size_t, N + 1> order;
    for (int it = 0; it < max_iter; ++it) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fs[a] < fs[b]; });
        const auto& best = s[order[0]];
        double spread = 0.0;
        for (std::size_t i = 1; i <= N; ++i)
            for (std::size_t d = 0; d < N; ++d)
                spread = std::max(spread, std::abs(s[order[i]][d] - best[d]) / (1.0 + std::abs(best[d])));
        const double frange = fs[order[N]] - fs[order[0]];
        if (spread < xtol || (frange <= ftol * std::abs(fs[order[0]]) && spread < std::sqrt(xtol))) {
            res.converged = true;
            res.iterations = it;
            break;
        }
        res.iterations = it + 1;

        std::array<double, N> centroid{};
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t d = 0; d < N; ++d) centroid[d] += s[order[i]][d] / N;
        const auto along = [&](double t) {
            std::array<double, N> p;
            for (std::size_t d = 0; d < N; ++d) p[d] = centroid[d] + t * (s[order[N]][d] - centroid[d]);
            return p;
        };
        const auto worst = order[N];
        auto xr = along(-1.0);
        const double fr = f(xr);
        if (fr < fs[order[0]]) {
            auto xe = along(-2.0);
            const double fe = f(xe);
            if (fe < fr) { s[worst] = xe; fs[worst] = fe; }
            else { s[worst] = xr; fs[worst] = fr; }
        } else if (fr < fs[order[N - 1]]) {
            s[worst] = xr;
            fs[worst] = fr;
        } else {
            auto xc = fr < fs[worst] ? along(-0.5) : along(0.5);
            const double fc = f(xc);
            if (fc < std::min(fr, fs[worst])) {
                s[worst] = xc;
                fs[worst] = fc;
            } else {
                for (std::size_t i = 1; i <= N; ++i) {
                    auto& v = s[order[i]];
                    for (std::size_t d = 0; d < N; ++d) v[d] = best[d] + 0.5 * (v[d] - best[d]);
                    fs[order[i]] = f(v);
                }
            }
        }
    }
    const auto ib = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
    res.x = s[ib];
    res.fx = fs[ib];
    return res;
}

} // namespace slowlight::detail
