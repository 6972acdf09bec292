// Quadrature on the reference triangle (0,0),(1,0),(0,1) and on [0,1].
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dpg {

struct QuadratureRule {
    // barycentric coordinates (l0, l1, l2) with l0 = 1 - x - y
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;  // sum to |T_ref| = 1/2
    int degree = 0;

    std::size_t size() const { return points.size(); }
    double x(std::size_t q) const { return points[q][1]; }
    double y(std::size_t q) const { return points[q][2]; }
};

/// Gauss-Legendre nodes/weights on [0,1], computed by Newton iteration on
/// the Legendre recurrence.
inline void gauss_legendre_01(int n, std::vector<double>& pts, std::vector<double>& wts) {
    if (n < 1) throw std::invalid_argument("gauss_legendre_01: n must be >= 1");
    pts.resize(n);
    wts.resize(n);
    for (int i = 0; i < n; ++i) {
        // initial guess on [-1,1]
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-16) break;
        }
        pts[i] = 0.5 * (1.0 + t);
        wts[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
}

/// Rule exact for all polynomials of total degree <= d on the reference
/// triangle, built from a collapsed tensor Gauss grid.
inline QuadratureRule quadrature(int d) {
    if (d < 1 || d > 20) throw std::invalid_argument("quadrature: degree must be in [1,20]");
    // x-direction carries an extra factor (1-x) from the collapse Jacobian.
    int nu = (d + 3) / 2;  // exact through degree d+1
    int nv = (d + 2) / 2;  // exact through degree d
    std::vector<double> up, uw, vp, vw;
    gauss_legendre_01(nu, up, uw);
    gauss_legendre_01(nv, vp, vw);
    QuadratureRule rule;
    rule.degree = d;
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            double x = up[i];
            double y = vp[j] * (1.0 - x);
            rule.points.push_back({1.0 - x - y, x, y});
            rule.weights.push_back(uw[i] * vw[j] * (1.0 - x));
        }
    }
    return rule;
}

}  // namespace dpg
