#include "ditto/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ditto/kernels.hpp"

namespace ditto {

SamplerConfig SamplerConfig::even(const NoiseSchedule& sched, int steps, double w) {
    SamplerConfig c;
    c.step_grid = sched.even_step_grid(steps);
    c.cfg_weight = w;
    return c;
}

void SamplerConfig::validate(const NoiseSchedule& sched) const {
    if (step_grid.empty() || step_grid.front() != sched.t_max())
        throw std::invalid_argument("SamplerConfig: grid must start at t_max");
    for (std::size_t i = 1; i < step_grid.size(); ++i)
        if (step_grid[i] >= step_grid[i - 1])
            throw std::invalid_argument("SamplerConfig: grid must be strictly decreasing");
    if (step_grid.back() <= 0)
        throw std::invalid_argument("SamplerConfig: grid steps must stay above 0");
}

namespace diffusion {

Tensor forward_noise(const NoiseSchedule& sched, const Tensor& x0, int t, const Tensor& eps) {
    if (!x0.same_shape(eps))
        throw std::invalid_argument("forward_noise: x0 " + x0.shape_str() + " vs eps " +
                                    eps.shape_str());
    const double a = sched.signal(t), b = sched.sigma(t);
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

ad::Var cfg_eps_graph(const DenoiserModel& teacher, ad::Tape& tape, const ModelVars& mv,
                      ad::Var x_t, int t, const Condition& c, double w, CallCounter* counter) {
    ad::Var e_null = teacher.eps_forward_graph(tape, mv, x_t, t, Condition::null(), counter);
    ad::Var e_cond = teacher.eps_forward_graph(tape, mv, x_t, t, c, counter);
    return tape.add(e_null, tape.scale(tape.sub(e_cond, e_null), w));
}

Tensor cfg_eps(const DenoiserModel& teacher, const Tensor& x_t, int t, const Condition& c,
               double w, CallCounter* counter) {
    Tensor e_null = teacher.eps_forward(x_t, t, Condition::null(), counter);
    Tensor e_cond = teacher.eps_forward(x_t, t, c, counter);
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = e_null[i] + w * (e_cond[i] - e_null[i]);
    return out;
}

namespace {
void ddim_coeffs(const NoiseSchedule& sched, int t, int t_prev, double& c_x, double& c_eps) {
    const double ab_t = sched.alphabar(t);
    if (ab_t < 1e-8) throw std::domain_error("ddim_step: degenerate alpha-bar at t");
    const double ab_p = sched.alphabar(t_prev);
    const double sig_t = std::sqrt(1.0 - ab_t), sig_p = std::sqrt(1.0 - ab_p);
    const double scale = std::sqrt(ab_p / ab_t);
    // x_prev = scale * (x_t - sig_t eps) + sig_p eps
    c_x = scale;
    c_eps = sig_p - scale * sig_t;
}
}  // namespace

Tensor ddim_step(const DenoiserModel& teacher, const Tensor& x_t, int t, int t_prev,
                 const Condition& c, double w, CallCounter* counter) {
    if (t_prev > t) throw std::invalid_argument("ddim_step: t_prev must not exceed t");
    if (t_prev == t) return x_t;
    Tensor eps = cfg_eps(teacher, x_t, t, c, w, counter);
    double c_x, c_eps;
    ddim_coeffs(teacher.schedule(), t, t_prev, c_x, c_eps);
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c_x * x_t[i] + c_eps * eps[i];
    return out;
}

ad::Var ddim_step_graph(const DenoiserModel& teacher, ad::Tape& tape, const ModelVars& mv,
                        ad::Var x_t, int t, int t_prev, const Condition& c, double w,
                        CallCounter* counter) {
    if (t_prev > t) throw std::invalid_argument("ddim_step: t_prev must not exceed t");
    if (t_prev == t) return x_t;
    ad::Var eps = cfg_eps_graph(teacher, tape, mv, x_t, t, c, w, counter);
    double c_x, c_eps;
    ddim_coeffs(teacher.schedule(), t, t_prev, c_x, c_eps);
    return tape.add(tape.scale(x_t, c_x), tape.scale(eps, c_eps));
}

Tensor ddim_step_batch(const DenoiserModel& teacher, const Tensor& x_t,
                       const std::vector<int>& t, const std::vector<int>& t_prev,
                       const std::vector<Condition>& c, const std::vector<double>& w,
                       CallCounter* counter) {
    const int B = x_t.rows();
    ad::Tape tape;
    ModelVars mv = teacher.vars_on(tape, false);
    ad::Var x = tape.constant(x_t);
    std::vector<double> td(t.begin(), t.end());
    std::vector<Condition> nulls(B);
    if (counter) counter->teacher_forward += 2 * B;
    Tensor e_null = tape.value(teacher.net_forward(tape, mv, x, td, nulls, nullptr));
    Tensor e_cond = tape.value(teacher.net_forward(tape, mv, x, td, c, nullptr));

    Tensor out(x_t.shape());
    const int D = x_t.cols();
    for (int i = 0; i < B; ++i) {
        double c_x, c_eps;
        ddim_coeffs(teacher.schedule(), t[i], t_prev[i], c_x, c_eps);
        for (int j = 0; j < D; ++j) {
            std::size_t k = static_cast<std::size_t>(i) * D + j;
            double eps = e_null[k] + w[i] * (e_cond[k] - e_null[k]);
            out[k] = c_x * x_t[k] + c_eps * eps;
        }
    }
    return out;
}

Tensor sample_chain(const DenoiserModel& model, const Tensor& x_T, const Condition& c,
                    const SamplerConfig& config, CallCounter* counter) {
    config.validate(model.schedule());
    Tensor x = x_T;
    const auto& grid = config.step_grid;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const int t = grid[i];
        const int t_next = i + 1 < grid.size() ? grid[i + 1] : 0;
        if (model.is_student())
            x = model.g_forward(x, c, config.cfg_weight, t, t_next, counter);
        else
            x = ddim_step(model, x, t, t_next, c, config.cfg_weight, counter);
    }
    return x;
}

TrainResult train_teacher(const Dataset& data, const TeacherTrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("train_teacher: empty dataset");
    if (cfg.schedule != "cosine")
        throw std::invalid_argument("train_teacher: unknown schedule " + cfg.schedule);

    NoiseSchedule sched(cfg.t_max);
    DenoiserModel model(false, cfg.hidden, cfg.seed, sched);
    auto params = model.params().list(false);
    AdamState adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    adam.init(params);

    std::mt19937_64 rng(cfg.seed * 2654435761ULL + 17);
    std::uniform_int_distribution<int> draw_t(1, cfg.t_max);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> loss_curve;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t at = 0; at + cfg.batch <= order.size(); at += cfg.batch) {
            const int B = cfg.batch;
            Tensor xt({B, kDataDim}), eps({B, kDataDim});
            std::vector<double> ts(B);
            std::vector<Condition> conds(B);
            for (int i = 0; i < B; ++i) {
                const LabeledSample& s = data[order[at + i]];
                int t = draw_t(rng);
                ts[i] = t;
                conds[i] = uni(rng) < cfg.cond_drop ? Condition::null() : s.cond;
                const double a = sched.signal(t), b = sched.sigma(t);
                for (int j = 0; j < kDataDim; ++j) {
                    double e = gauss(rng);
                    eps[static_cast<std::size_t>(i) * kDataDim + j] = e;
                    xt[static_cast<std::size_t>(i) * kDataDim + j] = a * s.spec[j] + b * e;
                }
            }
            ad::Tape tape;
            ModelVars mv = model.vars_on(tape, true);
            ad::Var pred = model.net_forward(tape, mv, tape.constant(std::move(xt)), ts, conds,
                                             nullptr);
            ad::Var loss = tape.mean(tape.pow_(tape.sub(pred, tape.constant(std::move(eps))), 2.0));
            const double lval = tape.value(loss)[0];
            if (!std::isfinite(lval))
                throw std::runtime_error("train_teacher: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch));
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (const ad::Var& v : mv.vars) grads.push_back(tape.grad(v));
            std::vector<const Tensor*> gp;
            for (const Tensor& g : grads) gp.push_back(&g);
            adam_step(params, gp, adam);
            epoch_loss += lval;
            ++batches;
        }
        loss_curve.push_back(epoch_loss / std::max(batches, 1));
    }
    return {std::move(model), std::move(loss_curve)};
}

}  // namespace diffusion
}  // namespace ditto
