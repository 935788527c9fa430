#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace slowlight::detail {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
};

// One G15/K31 panel on [a, b] from Boost's node tables. The error is |K - G|
// in the units of the integral (Boost's own non-adaptive call reports it on
// the reference interval [-1, 1]).
template <class F>
QuadratureResult gk31_panel(F& f, double a, double b)
{
    using kronrod = boost::math::quadrature::gauss_kronrod<double, 31>;
    using gauss = boost::math::quadrature::gauss<double, 15>;
    const auto& x = kronrod::abscissa();
    const auto& wk = kronrod::weights();
    const auto& wg = gauss::weights();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const double f0 = f(mid);
    double k = f0 * wk[0], g = f0 * wg[0];
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double pair = f(mid + half * x[i]) + f(mid - half * x[i]);
        k += pair * wk[i];
        if (i % 2 == 0) g += pair * wg[i / 2];
    }
    const double err = std::max(std::abs(k - g), 2.0 * std::numeric_limits<double>::epsilon() * std::abs(k));
    return {half * k, half * err};
}

// Globally adaptive Gauss-Kronrod (G15/K31 panels, worst panel bisected first)
// over [lo, hi], split at the interior breakpoints so that peaks and kinks sit
// on panel boundaries. Stops once the summed error estimate is below
// rel_tol * |integral| or after max_panels panels.
template <class F>
QuadratureResult integrate(F&& f, double lo, double hi, std::span<const double> breaks, double rel_tol,
                           unsigned max_panels = 4000)
{
    struct Panel {
        double a, b, value, error;
        bool operator<(const Panel& o) const { return error < o.error; }
    };
    const auto eval = [&](double a, double b) {
        const auto r = gk31_panel(f, a, b);
        return Panel{a, b, r.value, r.error};
    };

    std::vector<double> nodes{lo};
    for (double b : breaks)
        if (b > lo && b < hi) nodes.push_back(b);
    nodes.push_back(hi);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    std::priority_queue<Panel> heap;
    double value = 0.0, error = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        if (nodes[i + 1] - nodes[i] <= 0.0) continue;
        const auto p = eval(nodes[i], nodes[i + 1]);
        value += p.value;
        error += p.error;
        heap.push(p);
    }
    while (!heap.empty() && heap.size() < max_panels &&
           error > std::max(rel_tol * std::abs(value), std::numeric_limits<double>::min())) {
        const Panel w = heap.top();
        const double mid = 0.5 * (w.a + w.b);
        if (!(mid > w.a && mid < w.b)) break; // interval exhausted at machine precision
        heap.pop();
        const auto l = eval(w.a, mid), r = eval(mid, w.b);
        value += l.value + r.value - w.value;
        error += l.error + r.error - w.error;
        heap.push(l);
        heap.push(r);
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    QuadratureResult out;
    for (; !heap.empty(); heap.pop()) {
        out.value += heap.top().value;
        out.error += heap.top().error;
    }
    return out;
}

template <class F>
QuadratureResult integrate(F&& f, double lo, double hi, double rel_tol, unsigned max_panels = 4000)
{
    return integrate(std::forward<F>(f), lo, hi, std::span<const double>{}, rel_tol, max_panels);
}

template <class F>
std::complex<double> integrate_complex(F&& f, double lo, double hi, std::span<const double> breaks,
                                       double rel_tol, unsigned max_panels = 4000)
{
    auto re = integrate([&](double x) { return std::real(f(x)); }, lo, hi, breaks, rel_tol, max_panels);
    auto im = integrate([&](double x) { return std::imag(f(x)); }, lo, hi, breaks, rel_tol, max_panels);
    return {re.value, im.value};
}

// Bisection on a bracketing interval until |f| < ftol or the bracket collapses.
template <class F>
double bisect(F&& f, double lo, double hi, double ftol)
{
    double flo = f(lo);
    if (flo == 0.0) return lo;
    double fhi = f(hi);
    if (fhi == 0.0) return hi;
    if ((flo > 0) == (fhi > 0)) throw std::invalid_argument("bisect: interval does not bracket a root");
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (std::abs(fm) < ftol || hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::abs(mid))
            return mid;
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return mid;
}

} // namespace slowlight::detail
