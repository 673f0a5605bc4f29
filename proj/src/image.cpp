#include "irdet/image.hpp"

#include <algorithm>
#include <vector>

namespace irdet {

double quantile(const Image16& img, double q) {
    std::vector<uint16_t> v(img.data(), img.data() + img.size());
    const auto n = v.size();
    if (n == 0) return 0.0;
    std::size_t k = static_cast<std::size_t>(q * static_cast<double>(n - 1));
    if (k >= n) k = n - 1;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return static_cast<double>(v[k]);
}

} // namespace irdet
