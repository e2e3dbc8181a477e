#pragma once

// Inference-time optimization of the initial noise latent: the M-step
// surrogate optimization loop, gamma-sampling decoding, the adaptive
// M-schedule, and the full-chain baseline for comparison.

#include <vector>

#include "ditto/adam.hpp"
#include "ditto/controls.hpp"
#include "ditto/diffusion.hpp"

namespace ditto {

struct ItoConfig {
    int k = 40;                 // optimization steps
    int m = 1;                  // surrogate sampling steps per iteration
    bool adaptive = false;      // coarse-to-fine M schedule instead of fixed m
    int decode_steps = 2;       // T
    double gamma = 0.2;
    double cfg_weight = 3.0;
    Condition cond;
    AdamConfig opt{0.05, 0.9, 0.999, 1e-8};
    unsigned long seed = 0;

    void validate(const NoiseSchedule& sched) const;
};

struct ItoResult {
    Tensor latent;                      // optimized x_T*
    Tensor decoded;                     // x0 (kBins x kFrames)
    std::vector<double> loss_trajectory;
    CallCounter calls;
    long accounted_units = 0;
    double wall_seconds = 0.0;
};

namespace ito {

// M values per iteration: M=1 for floor(K/2), then M=2 for floor(3K/8),
// then M=4 for floor(K/8); floor remainders append at M=4. Requires K >= 8.
std::vector<int> adaptive_schedule(int k);

struct OptimizeResult {
    Tensor latent;
    Tensor last_x0;  // surrogate output at the final iterate
    std::vector<double> loss_trajectory;
};

// K Adam updates on x_T through an M-step student chain; only the latent
// receives gradients. Aborts with the trajectory attached on non-finite
// loss.
OptimizeResult optimize_latent(const DenoiserModel& student,
                               const controls::ControlTarget& target,
                               const controls::ToyEmbedder& embedder, const ItoConfig& cfg,
                               CallCounter* counter);

// Gamma-sampling decode along T evenly spaced noise levels: jump to
// sqrt(1-gamma^2)*tau then renoise by gamma*tau*eps; the final step lands
// at tau=0 with no injected noise.
Tensor gamma_decode(const DenoiserModel& student, const Tensor& x_T, const Condition& c,
                    double w, int decode_steps, double gamma, std::mt19937_64& rng,
                    CallCounter* counter);

// Full DITTO-2 run: optimize then decode. Accounted units are the
// instrumented student chain steps (K*M + T for fixed M).
ItoResult run_ditto2(const DenoiserModel& student, const controls::ControlTarget& target,
                     const controls::ToyEmbedder& embedder, const ItoConfig& cfg);

// Baseline DITTO: optimization through the full T-step CFG DDIM chain of
// the teacher. Accounted units are instrumented forward calls plus
// backward-equivalents and must reconcile to 4KT.
ItoResult ditto_baseline(const DenoiserModel& teacher, const controls::ControlTarget& target,
                         const controls::ToyEmbedder& embedder, int k, int decode_steps,
                         const ItoConfig& cfg);

}  // namespace ito
}  // namespace ditto
