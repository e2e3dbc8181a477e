#pragma once

// Denoiser network family: teacher eps-predictor and distilled student
// with CFG-weight embedding and anywhere-to-anywhere trajectory jumps via
// the 1-step Euler parameterization.

#include <optional>
#include <string>
#include <vector>

#include "ditto/autodiff.hpp"
#include "ditto/schedule.hpp"
#include "ditto/tensor.hpp"

namespace ditto {

// Toy spectrogram grid: frequency bins x time frames.
inline constexpr int kBins = 16;
inline constexpr int kFrames = 32;
inline constexpr int kDataDim = kBins * kFrames;

inline constexpr int kTempoClasses = 3;  // slow, mid, fast
inline constexpr int kMoodClasses = 4;

// Condition tags; -1 means the dedicated null-condition embedding.
struct Condition {
    int tempo = -1;
    int mood = -1;
    bool is_null() const { return tempo < 0 && mood < 0; }
    static Condition null() { return {}; }
};

// Instrumented model-call accounting (the 4KT vs K*M+T cost model).
struct CallCounter {
    long teacher_forward = 0;   // eps_theta evaluations
    long teacher_backward = 0;  // backward-equivalent units through eps_theta
    long student_steps = 0;     // g_forward chain steps
};

struct DenoiserParams {
    static constexpr int kBlocks = 3;

    Tensor w_in, b_in;
    Tensor w1[kBlocks], b1[kBlocks];
    Tensor w2[kBlocks], b2[kBlocks];
    Tensor w_out, b_out;
    Tensor w_time;                 // time-embedding projection
    Tensor tempo_table;            // (kTempoClasses+1) x hidden, last row = null
    Tensor mood_table;             // (kMoodClasses+1) x hidden, last row = null
    Tensor skip_alpha;             // 1x1 gain on the sigma(t)*x_t skip path
    Tensor w_cfg;                  // CFG-weight Fourier projection (student only)

    std::vector<Tensor*> list(bool student);
    std::vector<const Tensor*> list(bool student) const;
    static std::vector<std::string> names(bool student);
};

// Vars mirroring DenoiserParams on a tape, same ordering as list().
struct ModelVars {
    std::vector<ad::Var> vars;
};

class DenoiserModel {
public:
    static constexpr int kTimeFeatDim = 32;
    static constexpr int kCfgFeatDim = 16;

    DenoiserModel() = default;
    // Randomly initialized; final layer starts at zero.
    DenoiserModel(bool student, int hidden, unsigned long seed, NoiseSchedule schedule);

    // Student copy of a teacher: identical weights plus a fresh (zero)
    // CFG-weight pathway, so the initial student reproduces the teacher.
    static DenoiserModel student_from_teacher(const DenoiserModel& teacher);

    bool is_student() const { return student_; }
    int hidden() const { return hidden_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    DenoiserParams& params() { return params_; }
    const DenoiserParams& params() const { return params_; }
    std::size_t parameter_count() const;

    // Registers every parameter as a tape leaf.
    ModelVars vars_on(ad::Tape& tape, bool requires_grad) const;

    // Raw network pass: predicted noise for a batch of flattened latents
    // x (B x kDataDim). t and (for students) w are per-row. Throws on tag
    // ids outside the vocabulary.
    ad::Var net_forward(ad::Tape& tape, const ModelVars& mv, ad::Var x,
                        const std::vector<double>& t,
                        const std::vector<Condition>& cond,
                        const std::vector<double>* w) const;

    // Teacher noise prediction for a single latent; counts one call.
    Tensor eps_forward(const Tensor& x_t, double t, const Condition& c,
                       CallCounter* counter = nullptr) const;
    ad::Var eps_forward_graph(ad::Tape& tape, const ModelVars& mv, ad::Var x_t,
                              double t, const Condition& c,
                              CallCounter* counter = nullptr) const;

    // Student trajectory jump x_t -> x_s (0 <= s <= t), Euler
    // parameterization: r*x_t + (1-r)*anchor, r = sigma(s)/sigma(t). The
    // jump is exact at s = t and at t = s = 0. Counts one chain step.
    Tensor g_forward(const Tensor& x_t, const Condition& c, double w, double t,
                     double s, CallCounter* counter = nullptr) const;
    ad::Var g_forward_graph(ad::Tape& tape, const ModelVars& mv, ad::Var x_t,
                            const Condition& c, double w, double t, double s,
                            CallCounter* counter = nullptr) const;

    // Batched trajectory jump with per-row (t, s, w); every row needs
    // 0 < s+1 <= t (no identity rows). Counts one chain step per row.
    ad::Var g_forward_graph_batch(ad::Tape& tape, const ModelVars& mv, ad::Var x,
                                  const std::vector<Condition>& cond,
                                  const std::vector<double>& w,
                                  const std::vector<double>& t,
                                  const std::vector<double>& s,
                                  CallCounter* counter = nullptr) const;

    void save(const std::string& path) const;
    static DenoiserModel load(const std::string& path);

    // Sinusoidal features of a (possibly fractional) step index.
    static std::vector<double> time_features(double t, int t_max);
    static std::vector<double> cfg_features(double w);

private:
    void check_condition(const Condition& c) const;

    bool student_ = false;
    int hidden_ = 0;
    NoiseSchedule schedule_;
    DenoiserParams params_;
};

}  // namespace ditto
