#pragma once

// Consistency-model and consistency-trajectory-model distillation of the
// teacher into the student, with EMA shadow maintenance and CFG-weight
// folding. CM is the s=0-only configuration of the shared CTM path.

#include <string>
#include <vector>

#include "ditto/diffusion.hpp"

namespace ditto {

enum class DistillMethod { CM, CTM };

struct DistillConfig {
    DistillMethod method = DistillMethod::CTM;
    int steps = 2000;
    int batch = 16;
    double ema_decay = 0.999;
    double lr = 1e-3;
    double w_min = 1.0, w_max = 8.0;
    double s_zero_fraction = 0.5;  // CTM target-step draws oversample s=0
    unsigned long seed = 7;
    std::string log_path;          // optional training-log CSV (step,loss,ema_defect)
};

namespace distill {

// shadow <- decay * shadow + (1 - decay) * student, per parameter.
void ema_update(DenoiserParams& shadow, const DenoiserParams& student, double decay);

struct LossBatch {
    Tensor x_t;                    // B x kDataDim
    std::vector<int> t;            // 1..t_max
    std::vector<int> s;            // 0..t-1 (all zero for CM)
    std::vector<double> w;
    std::vector<Condition> cond;
};

// Squared consistency defect between the student jump t->s and the shadow
// jump (t-1)->s from the teacher-stepped point. Gradients flow only into
// student_vars; the shadow and teacher branches are evaluated outside the
// tape. Returns the scalar loss var.
ad::Var consistency_loss(ad::Tape& tape, const DenoiserModel& student,
                         const ModelVars& student_vars, const DenoiserModel& shadow,
                         const DenoiserModel& teacher, const LossBatch& batch);

// Convenience: value of the loss on a batch (no training).
double consistency_loss_value(const DenoiserModel& student, const DenoiserModel& shadow,
                              const DenoiserModel& teacher, const LossBatch& batch);

LossBatch draw_batch(const Dataset& data, const DenoiserModel& teacher,
                     const DistillConfig& cfg, std::mt19937_64& rng);

struct DistillResult {
    DenoiserModel student;
    std::vector<double> loss_curve;
};

DistillResult run(const DenoiserModel& teacher, const Dataset& data, const DistillConfig& cfg);

}  // namespace distill
}  // namespace ditto
