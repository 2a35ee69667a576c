#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace lqg {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(const Point2& a, const Point2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// Regular grid with n cells per axis (power of two, for the FFT embedding)
// over [origin, origin + extent] per axis. Field values live at cell centers.
struct GridSpec {
    int dimension = 2;      // 1 or 2
    double origin_x = 0.0;  // lower-left corner
    double origin_y = 0.0;  // unused in 1d
    double extent = 1.0;    // side length per axis
    std::size_t resolution = 2;  // cells per axis

    void validate() const {
        if (dimension != 1 && dimension != 2)
            throw std::invalid_argument("GridSpec: dimension must be 1 or 2");
        if (!(extent > 0.0)) throw std::invalid_argument("GridSpec: extent must be > 0");
        if (resolution < 2 || (resolution & (resolution - 1)) != 0)
            throw std::invalid_argument("GridSpec: resolution must be a power of two >= 2");
    }

    double cell_size() const { return extent / static_cast<double>(resolution); }
    std::size_t cell_count() const {
        return dimension == 1 ? resolution : resolution * resolution;
    }
    double cell_volume() const {
        const double h = cell_size();
        return dimension == 1 ? h : h * h;
    }

    // Center of cell i (1d) or (ix, iy) flattened row-major (2d).
    double center_x(std::size_t ix) const { return origin_x + (ix + 0.5) * cell_size(); }
    double center_y(std::size_t iy) const { return origin_y + (iy + 0.5) * cell_size(); }
    std::size_t flat_index(std::size_t ix, std::size_t iy) const {
        return iy * resolution + ix;
    }

    bool contains(double x) const { return x >= origin_x && x <= origin_x + extent; }
    bool contains(const Point2& p) const {
        return p.x >= origin_x && p.x <= origin_x + extent && p.y >= origin_y &&
               p.y <= origin_y + extent;
    }
};

}  // namespace lqg
