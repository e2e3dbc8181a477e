#include "ditto/distill.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ditto/kernels.hpp"

namespace ditto::distill {

void ema_update(DenoiserParams& shadow, const DenoiserParams& student, double decay) {
    if (decay <= 0.0 || decay > 1.0)
        throw std::invalid_argument("ema_update: decay must be in (0, 1]");
    auto sh = shadow.list(true);
    auto st = student.list(true);
    for (std::size_t k = 0; k < sh.size(); ++k) {
        if (!sh[k]->same_shape(*st[k]))
            throw std::invalid_argument("ema_update: shape mismatch");
        for (std::size_t i = 0; i < sh[k]->size(); ++i)
            (*sh[k])[i] = decay * (*sh[k])[i] + (1.0 - decay) * (*st[k])[i];
    }
}

namespace {

// Value-level batched trajectory jump tolerating identity rows (s = t,
// including t = 0).
Tensor g_value_batch(const DenoiserModel& model, const Tensor& x,
                     const std::vector<Condition>& cond, const std::vector<double>& w,
                     const std::vector<int>& t, const std::vector<int>& s) {
    const int B = x.rows();
    std::vector<int> live;
    for (int i = 0; i < B; ++i)
        if (t[i] > 0 && s[i] < t[i]) live.push_back(i);

    Tensor out = x;
    if (live.empty()) return out;

    Tensor xs({static_cast<int>(live.size()), kDataDim});
    std::vector<Condition> lc(live.size());
    std::vector<double> lw(live.size()), lt(live.size()), ls(live.size());
    for (std::size_t j = 0; j < live.size(); ++j) {
        int i = live[j];
        std::copy(x.data() + static_cast<std::size_t>(i) * kDataDim,
                  x.data() + static_cast<std::size_t>(i + 1) * kDataDim,
                  xs.data() + j * kDataDim);
        lc[j] = cond[i];
        lw[j] = w[i];
        lt[j] = t[i];
        ls[j] = s[i];
    }
    ad::Tape tape;
    ModelVars mv = model.vars_on(tape, false);
    Tensor res = tape.value(model.g_forward_graph_batch(tape, mv, tape.constant(std::move(xs)),
                                                        lc, lw, lt, ls));
    for (std::size_t j = 0; j < live.size(); ++j)
        std::copy(res.data() + j * kDataDim, res.data() + (j + 1) * kDataDim,
                  out.data() + static_cast<std::size_t>(live[j]) * kDataDim);
    return out;
}

}  // namespace

LossBatch draw_batch(const Dataset& data, const DenoiserModel& teacher,
                     const DistillConfig& cfg, std::mt19937_64& rng) {
    const NoiseSchedule& sched = teacher.schedule();
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    std::uniform_int_distribution<int> draw_t(1, sched.t_max());
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_real_distribution<double> draw_w(cfg.w_min, cfg.w_max);
    std::normal_distribution<double> gauss;

    const int B = cfg.batch;
    LossBatch b;
    b.x_t = Tensor({B, kDataDim});
    b.t.resize(B);
    b.s.resize(B);
    b.w.resize(B);
    b.cond.resize(B);
    for (int i = 0; i < B; ++i) {
        const LabeledSample& sample = data[pick(rng)];
        int t = draw_t(rng);
        b.t[i] = t;
        if (cfg.method == DistillMethod::CM) {
            b.s[i] = 0;
        } else {
            if (uni(rng) < cfg.s_zero_fraction || t == 1)
                b.s[i] = 0;
            else
                b.s[i] = std::uniform_int_distribution<int>(0, t - 1)(rng);
        }
        b.w[i] = draw_w(rng);
        // Null-condition rows keep the unconditional branch usable after
        // distillation, matching the teacher's CFG training.
        b.cond[i] = uni(rng) < 0.1 ? Condition::null() : sample.cond;
        const double a = sched.signal(t), sg = sched.sigma(t);
        for (int j = 0; j < kDataDim; ++j)
            b.x_t[static_cast<std::size_t>(i) * kDataDim + j] = a * sample.spec[j] + sg * gauss(rng);
    }
    return b;
}

ad::Var consistency_loss(ad::Tape& tape, const DenoiserModel& student,
                         const ModelVars& student_vars, const DenoiserModel& shadow,
                         const DenoiserModel& teacher, const LossBatch& batch) {
    const int B = batch.x_t.rows();
    for (int i = 0; i < B; ++i) {
        if (batch.t[i] < 1) throw std::invalid_argument("consistency_loss: t=0 draw excluded");
        if (batch.s[i] >= batch.t[i])
            throw std::invalid_argument("consistency_loss: requires s < t");
    }

    // Frozen teacher one-DDIM-step, then the shadow jump (t-1) -> s; no
    // gradients flow through either branch.
    std::vector<int> t_prev(B);
    for (int i = 0; i < B; ++i) t_prev[i] = batch.t[i] - 1;
    Tensor stepped = diffusion::ddim_step_batch(teacher, batch.x_t, batch.t, t_prev,
                                                batch.cond, batch.w);
    Tensor target = g_value_batch(shadow, stepped, batch.cond, batch.w, t_prev, batch.s);

    std::vector<double> td(batch.t.begin(), batch.t.end());
    std::vector<double> sd(batch.s.begin(), batch.s.end());
    ad::Var pred = student.g_forward_graph_batch(tape, student_vars,
                                                 tape.constant(batch.x_t), batch.cond,
                                                 batch.w, td, sd);
    ad::Var diff = tape.sub(pred, tape.constant(std::move(target)));
    return tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / B);
}

double consistency_loss_value(const DenoiserModel& student, const DenoiserModel& shadow,
                              const DenoiserModel& teacher, const LossBatch& batch) {
    ad::Tape tape;
    ModelVars mv = student.vars_on(tape, false);
    return tape.value(consistency_loss(tape, student, mv, shadow, teacher, batch))[0];
}

DistillResult run(const DenoiserModel& teacher, const Dataset& data, const DistillConfig& cfg) {
    if (teacher.is_student()) throw std::invalid_argument("distill: teacher expected");
    if (cfg.ema_decay <= 0.0 || cfg.ema_decay > 1.0)
        throw std::invalid_argument("distill: EMA decay must be in (0, 1]");

    DenoiserModel student = DenoiserModel::student_from_teacher(teacher);
    DenoiserModel shadow = student;

    auto params = student.params().list(true);
    AdamState adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    adam.init(params);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        log << "step,loss,ema_defect\n";
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<double> curve;
    curve.reserve(cfg.steps);
    for (int step = 0; step < cfg.steps; ++step) {
        LossBatch batch = draw_batch(data, teacher, cfg, rng);
        ad::Tape tape;
        ModelVars mv = student.vars_on(tape, true);
        ad::Var loss = consistency_loss(tape, student, mv, shadow, teacher, batch);
        const double lval = tape.value(loss)[0];
        if (!std::isfinite(lval))
            throw std::runtime_error("distill: loss diverged at step " + std::to_string(step));
        tape.backward(loss);
        std::vector<Tensor> grads;
        for (const ad::Var& v : mv.vars) grads.push_back(tape.grad(v));
        std::vector<const Tensor*> gp;
        for (const Tensor& g : grads) gp.push_back(&g);
        adam_step(params, gp, adam);
        ema_update(shadow.params(), student.params(), cfg.ema_decay);
        curve.push_back(lval);

        if (log.is_open()) {
            double defect = 0.0;
            auto sh = shadow.params().list(true);
            auto st = student.params().list(true);
            for (std::size_t k = 0; k < sh.size(); ++k)
                for (std::size_t i = 0; i < sh[k]->size(); ++i) {
                    double d = (*sh[k])[i] - (*st[k])[i];
                    defect += d * d;
                }
            log << step << ',' << lval << ',' << std::sqrt(defect) << '\n';
        }
    }
    return {std::move(student), std::move(curve)};
}

}  // namespace ditto::distill
