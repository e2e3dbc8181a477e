#include "ditto/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ditto {

namespace {
constexpr double kOffset = 0.008;

double raw_cosine(double t, int t_max) {
    double u = (t / t_max + kOffset) / (1.0 + kOffset);
    double c = std::cos(u * std::numbers::pi / 2.0);
    return c * c;
}
}  // namespace

NoiseSchedule::NoiseSchedule(int t_max) : t_max_(t_max) {
    if (t_max < 1) throw std::invalid_argument("NoiseSchedule: t_max must be >= 1");
    const double f0 = raw_cosine(0.0, t_max_);
    grid_.resize(t_max_ + 1);
    for (int t = 0; t <= t_max_; ++t) {
        double ab = raw_cosine(static_cast<double>(t), t_max_) / f0;
        grid_[t] = std::max(ab, kAlphaBarFloor);
    }
    grid_[0] = 1.0;
}

double NoiseSchedule::alphabar(int t) const {
    if (t < 0 || t > t_max_) throw std::out_of_range("alphabar: step out of range");
    return grid_[t];
}

double NoiseSchedule::alphabar_cont(double t) const {
    if (t < 0.0 || t > t_max_ + 1e-9) throw std::out_of_range("alphabar_cont: t out of range");
    if (t <= 0.0) return 1.0;
    double ab = raw_cosine(t, t_max_) / raw_cosine(0.0, t_max_);
    return std::max(std::min(ab, 1.0), kAlphaBarFloor);
}

double NoiseSchedule::sigma(double t) const { return std::sqrt(1.0 - alphabar_cont(t)); }
double NoiseSchedule::signal(double t) const { return std::sqrt(alphabar_cont(t)); }

double NoiseSchedule::t_of_sigma(double sig) const {
    if (sig <= 0.0) return 0.0;
    double hi_sig = sigma(static_cast<double>(t_max_));
    if (sig >= hi_sig) return static_cast<double>(t_max_);
    double lo = 0.0, hi = static_cast<double>(t_max_);
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        if (sigma(mid) < sig)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<int> NoiseSchedule::even_step_grid(int steps) const {
    if (steps < 1 || steps > t_max_)
        throw std::invalid_argument("even_step_grid: steps must be in [1, t_max]");
    std::vector<int> g(steps);
    for (int i = 0; i < steps; ++i)
        g[i] = t_max_ - i * t_max_ / steps;
    return g;
}

}  // namespace ditto
