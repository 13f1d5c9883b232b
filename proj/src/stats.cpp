#include "rct/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rct/error.hpp"

namespace rct {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw ContractError("mean_of: empty");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractError("spearman: size mismatch");
    if (x.size() < 2) throw ContractError("spearman: need at least two points");
    std::vector<double> rx = average_ranks(x);
    std::vector<double> ry = average_ranks(y);
    const double mx = mean_of(rx), my = mean_of(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double sign_test_p(int wins, int n) {
    if (n < 0 || wins < 0 || wins > n) throw ContractError("sign_test_p: bad arguments");
    if (n == 0) return 1.0;
    // exact tail of Binomial(n, 1/2) via a running binomial coefficient
    long double coeff = 1.0L;  // C(n, 0)
    long double tail = 0.0L;
    for (int k = 0; k <= n; ++k) {
        if (k >= wins) tail += coeff;
        coeff = coeff * (n - k) / (k + 1);
    }
    const long double total = std::pow(2.0L, static_cast<long double>(n));
    return static_cast<double>(tail / total);
}

}  // namespace rct
