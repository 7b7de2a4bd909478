#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace kc {

// Welford mean/variance accumulator with an associative merge.
struct RunningStats {
    std::int64_t n = 0;
    double mean = 0;
    double m2 = 0;

    void add(double x) {
        ++n;
        double dl = x - mean;
        mean += dl / double(n);
        m2 += dl * (x - mean);
    }
    void merge(const RunningStats& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double tot = double(n + o.n);
        const double dl = o.mean - mean;
        mean += dl * double(o.n) / tot;
        m2 += o.m2 + dl * dl * double(n) * double(o.n) / tot;
        n += o.n;
    }
    double variance() const { return n > 1 ? m2 / double(n - 1) : 0.0; }
    // Standard error of the mean.
    double stderr_mean() const { return n > 1 ? std::sqrt(variance() / double(n)) : 0.0; }
};

struct LineFit {
    double slope = 0;
    double intercept = 0;
    double slope_stderr = 0;
};

// Ordinary least squares y = intercept + slope x.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    if (n > 2 && sxx > 0) {
        double rss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double r = y[i] - f.intercept - f.slope * x[i];
            rss += r * r;
        }
        f.slope_stderr = std::sqrt(rss / double(n - 2) / sxx);
    }
    return f;
}

}  // namespace kc
