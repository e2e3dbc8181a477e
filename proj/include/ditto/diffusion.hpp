#pragma once

// Forward noising, classifier-free guidance, deterministic DDIM sampling
// and teacher training by noise-prediction MSE.

#include <string>
#include <vector>

#include "ditto/adam.hpp"
#include "ditto/scorenet.hpp"

namespace ditto {

struct LabeledSample {
    Tensor spec;  // kBins x kFrames
    Condition cond;
};
using Dataset = std::vector<LabeledSample>;

struct SamplerConfig {
    std::vector<int> step_grid;  // strictly decreasing, starts at t_max
    double cfg_weight = 3.0;

    static SamplerConfig even(const NoiseSchedule& sched, int steps, double w);
    void validate(const NoiseSchedule& sched) const;
};

struct TeacherTrainConfig {
    std::string schedule = "cosine";
    int t_max = 20;
    int hidden = 96;
    int epochs = 60;
    int batch = 32;
    double lr = 2e-3;
    double cond_drop = 0.1;
    unsigned long seed = 1;
};

namespace diffusion {

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor forward_noise(const NoiseSchedule& sched, const Tensor& x0, int t, const Tensor& eps);

// eps_hat = eps(null) + w (eps(c) - eps(null)); always two model calls.
Tensor cfg_eps(const DenoiserModel& teacher, const Tensor& x_t, int t, const Condition& c,
               double w, CallCounter* counter = nullptr);
ad::Var cfg_eps_graph(const DenoiserModel& teacher, ad::Tape& tape, const ModelVars& mv,
                      ad::Var x_t, int t, const Condition& c, double w,
                      CallCounter* counter = nullptr);

// Deterministic DDIM update t -> t_prev (t_prev <= t; equal is identity).
Tensor ddim_step(const DenoiserModel& teacher, const Tensor& x_t, int t, int t_prev,
                 const Condition& c, double w, CallCounter* counter = nullptr);
ad::Var ddim_step_graph(const DenoiserModel& teacher, ad::Tape& tape, const ModelVars& mv,
                        ad::Var x_t, int t, int t_prev, const Condition& c, double w,
                        CallCounter* counter = nullptr);

// Batched value-level DDIM step with per-row times (distillation inner loop).
Tensor ddim_step_batch(const DenoiserModel& teacher, const Tensor& x_t,
                       const std::vector<int>& t, const std::vector<int>& t_prev,
                       const std::vector<Condition>& c, const std::vector<double>& w,
                       CallCounter* counter = nullptr);

// Full chain along config.step_grid down to 0. Teacher models run CFG DDIM
// (2 calls per step); students run deterministic trajectory jumps (1 per
// step, CFG folded into w).
Tensor sample_chain(const DenoiserModel& model, const Tensor& x_T, const Condition& c,
                    const SamplerConfig& config, CallCounter* counter = nullptr);

struct TrainResult {
    DenoiserModel model;
    std::vector<double> loss_curve;
};

TrainResult train_teacher(const Dataset& data, const TeacherTrainConfig& cfg);

}  // namespace diffusion
}  // namespace ditto
