#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>

namespace irdet {

// Images are row-major so (row, col) indexing matches raster order on disk.
using Image16 = Eigen::Matrix<uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ImageD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kIntensityMax = 65535.0;

template <typename Derived>
ImageD to_double(const Eigen::MatrixBase<Derived>& img) {
    return img.template cast<double>();
}

inline uint16_t clamp_u16(double v) {
    return static_cast<uint16_t>(std::clamp(std::nearbyint(v), 0.0, kIntensityMax));
}

inline Image16 to_u16(const ImageD& img) {
    Image16 out(img.rows(), img.cols());
    for (Eigen::Index r = 0; r < img.rows(); ++r)
        for (Eigen::Index c = 0; c < img.cols(); ++c) out(r, c) = clamp_u16(img(r, c));
    return out;
}

// Bilinear sample at continuous coordinates (x right, y down), pixel (r, c)
// centered at (c + 0.5, r + 0.5). Out-of-support coordinates return `fill`.
template <typename Scalar, int Options>
double bilinear_sample(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Options>& img,
                       double x, double y, double fill) {
    const double gx = x - 0.5;
    const double gy = y - 0.5;
    const auto w = static_cast<double>(img.cols());
    const auto h = static_cast<double>(img.rows());
    if (gx < -1.0 || gy < -1.0 || gx > w || gy > h) return fill;
    const double fx = std::floor(gx);
    const double fy = std::floor(gy);
    const double ax = gx - fx;
    const double ay = gy - fy;
    auto at = [&](double yy, double xx) -> double {
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) return fill;
        return static_cast<double>(img(static_cast<Eigen::Index>(yy), static_cast<Eigen::Index>(xx)));
    };
    const double v00 = at(fy, fx);
    const double v01 = at(fy, fx + 1);
    const double v10 = at(fy + 1, fx);
    const double v11 = at(fy + 1, fx + 1);
    return (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11);
}

// k-th smallest with k = floor(q * (n - 1)); deterministic, no interpolation.
double quantile(const Image16& img, double q);

} // namespace irdet
