#pragma once

// 2-d convex hull membership for the oversampling tests.

#include <algorithm>
#include <vector>

#include "fewgan/matrix.hpp"

namespace fewgan::testing {

struct Point2 {
    double x, y;
};

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Monotone chain; returns hull in counter-clockwise order.
inline std::vector<Point2> convex_hull(std::vector<Point2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    const std::size_t n = pts.size();
    if (n < 3) return pts;
    std::vector<Point2> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

inline bool inside_hull(const std::vector<Point2>& hull, const Point2& p, double eps = 1e-9) {
    if (hull.size() < 3) {
        // degenerate hull: point must lie on the segment / point
        if (hull.empty()) return false;
        if (hull.size() == 1)
            return std::abs(p.x - hull[0].x) <= eps && std::abs(p.y - hull[0].y) <= eps;
        const Point2 a = hull[0], b = hull[1];
        if (std::abs(cross(a, b, p)) > eps) return false;
        return p.x >= std::min(a.x, b.x) - eps && p.x <= std::max(a.x, b.x) + eps &&
               p.y >= std::min(a.y, b.y) - eps && p.y <= std::max(a.y, b.y) + eps;
    }
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Point2& a = hull[i];
        const Point2& b = hull[(i + 1) % hull.size()];
        if (cross(a, b, p) < -eps) return false;
    }
    return true;
}

inline std::vector<Point2> rows_as_points(const Matrix& m) {
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < m.rows(); ++i) pts.push_back({m(i, 0), m(i, 1)});
    return pts;
}

}  // namespace fewgan::testing
