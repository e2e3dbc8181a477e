#pragma once

// Discrete cosine noise schedule over T_max steps, with a continuous
// extension used by trajectory jumps to off-grid noise levels.

#include <vector>

namespace ditto {

class NoiseSchedule {
public:
    explicit NoiseSchedule(int t_max = 20);

    int t_max() const { return t_max_; }

    // alpha_bar at integer grid step t in [0, t_max]; 1 at t=0, clamped to
    // a small positive floor at the top so x̂0 recovery stays defined.
    double alphabar(int t) const;

    // Continuous extension; agrees with alphabar() at grid points.
    double alphabar_cont(double t) const;

    double sigma(double t) const;        // sqrt(1 - alpha_bar)
    double signal(double t) const;       // sqrt(alpha_bar)

    // Inverse of sigma() on [0, t_max]; sigma is strictly increasing.
    double t_of_sigma(double sig) const;

    // T or M evenly spaced decreasing grid indices starting at t_max and
    // ending just above 0, e.g. steps=4, t_max=20 -> {20, 15, 10, 5}.
    std::vector<int> even_step_grid(int steps) const;

    static constexpr double kAlphaBarFloor = 0.004;

private:
    int t_max_;
    std::vector<double> grid_;
};

}  // namespace ditto
