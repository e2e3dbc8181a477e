#include "ditto/ito.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ditto {

void ItoConfig::validate(const NoiseSchedule& sched) const {
    if (k < 0) throw std::invalid_argument("ItoConfig: K must be nonnegative");
    if (!adaptive && (m < 1 || m > sched.t_max()))
        throw std::invalid_argument("ItoConfig: M must be in [1, t_max]");
    if (decode_steps < 1 || decode_steps > sched.t_max())
        throw std::invalid_argument("ItoConfig: T must be in [1, t_max]");
    if (gamma < 0.0 || gamma > 1.0)
        throw std::invalid_argument("ItoConfig: gamma must be in [0, 1]");
}

namespace ito {

std::vector<int> adaptive_schedule(int k) {
    if (k < 8) throw std::invalid_argument("adaptive_schedule: requires K >= 8");
    const int n1 = k / 2, n2 = 3 * k / 8, n3 = k / 8;
    std::vector<int> sched;
    sched.reserve(k);
    sched.insert(sched.end(), n1, 1);
    sched.insert(sched.end(), n2, 2);
    sched.insert(sched.end(), n3, 4);
    sched.insert(sched.end(), k - n1 - n2 - n3, 4);  // floor remainders
    return sched;
}

namespace {

std::string dump_trajectory(const std::vector<double>& traj) {
    std::ostringstream os;
    for (std::size_t i = 0; i < traj.size(); ++i) os << (i ? "," : "") << traj[i];
    return os.str();
}

Tensor to_grid(const Tensor& flat) {
    Tensor g({kBins, kFrames});
    std::copy(flat.data(), flat.data() + kDataDim, g.data());
    return g;
}

}  // namespace

OptimizeResult optimize_latent(const DenoiserModel& student,
                               const controls::ControlTarget& target,
                               const controls::ToyEmbedder& embedder, const ItoConfig& cfg,
                               CallCounter* counter) {
    cfg.validate(student.schedule());
    target.validate();

    std::mt19937_64 rng(cfg.seed);
    Tensor latent = Tensor::randn({1, kDataDim}, rng);

    OptimizeResult result;
    if (cfg.k == 0) {
        result.latent = std::move(latent);
        return result;
    }

    std::vector<int> m_per_iter =
        cfg.adaptive ? adaptive_schedule(cfg.k) : std::vector<int>(cfg.k, cfg.m);

    AdamState adam(cfg.opt);
    adam.init({&latent});

    for (int iter = 0; iter < cfg.k; ++iter) {
        const int m = m_per_iter[iter];
        const auto grid = student.schedule().even_step_grid(m);

        ad::Tape tape;
        ModelVars mv = student.vars_on(tape, false);
        ad::Var x = tape.leaf(latent, true);
        ad::Var cur = x;
        for (int i = 0; i < m; ++i) {
            const int t = grid[i];
            const int s = i + 1 < m ? grid[i + 1] : 0;
            cur = student.g_forward_graph(tape, mv, cur, cfg.cond, cfg.cfg_weight, t, s, counter);
        }
        ad::Var loss = controls::control_loss(tape, cur, target, embedder);
        const double lval = tape.value(loss)[0];
        if (!std::isfinite(lval))
            throw std::runtime_error("optimize_latent: non-finite loss at iteration " +
                                     std::to_string(iter) + "; trajectory so far: " +
                                     dump_trajectory(result.loss_trajectory));
        result.loss_trajectory.push_back(lval);
        tape.backward(loss);
        Tensor g = tape.grad(x);
        adam_step({&latent}, {&g}, adam);
        if (iter + 1 == cfg.k) result.last_x0 = tape.value(cur);
    }
    result.latent = std::move(latent);
    return result;
}

Tensor gamma_decode(const DenoiserModel& student, const Tensor& x_T, const Condition& c,
                    double w, int decode_steps, double gamma, std::mt19937_64& rng,
                    CallCounter* counter) {
    const NoiseSchedule& sched = student.schedule();
    const auto grid = sched.even_step_grid(decode_steps);
    std::normal_distribution<double> gauss;

    Tensor x = x_T;
    for (int i = 0; i < decode_steps; ++i) {
        const double t = grid[i];
        if (i + 1 == decode_steps) {
            // Final step targets tau = 0 with no injected noise.
            x = student.g_forward(x, c, w, t, 0.0, counter);
            break;
        }
        const double tau_next = sched.sigma(grid[i + 1]);
        const double tau_hat = std::sqrt(1.0 - gamma * gamma) * tau_next;
        x = student.g_forward(x, c, w, t, sched.t_of_sigma(tau_hat), counter);
        if (gamma > 0.0) {
            const double amp = gamma * tau_next;
            for (std::size_t j = 0; j < x.size(); ++j) x[j] += amp * gauss(rng);
        }
    }
    return x;
}

ItoResult run_ditto2(const DenoiserModel& student, const controls::ControlTarget& target,
                     const controls::ToyEmbedder& embedder, const ItoConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    CallCounter counter;

    OptimizeResult opt = optimize_latent(student, target, embedder, cfg, &counter);

    std::mt19937_64 decode_rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 1);
    Tensor x0 = gamma_decode(student, opt.latent, cfg.cond, cfg.cfg_weight, cfg.decode_steps,
                             cfg.gamma, decode_rng, &counter);

    long expected = cfg.decode_steps;
    if (cfg.adaptive)
        for (int m : adaptive_schedule(cfg.k)) expected += m;
    else
        expected += static_cast<long>(cfg.k) * cfg.m;
    if (counter.student_steps != expected)
        throw std::logic_error("run_ditto2: accounted units " +
                               std::to_string(counter.student_steps) + " != K*M+T = " +
                               std::to_string(expected));

    ItoResult r;
    r.latent = std::move(opt.latent);
    r.decoded = to_grid(x0);
    r.loss_trajectory = std::move(opt.loss_trajectory);
    r.calls = counter;
    r.accounted_units = counter.student_steps;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

ItoResult ditto_baseline(const DenoiserModel& teacher, const controls::ControlTarget& target,
                         const controls::ToyEmbedder& embedder, int k, int decode_steps,
                         const ItoConfig& cfg) {
    target.validate();
    const auto start = std::chrono::steady_clock::now();
    CallCounter counter;

    std::mt19937_64 rng(cfg.seed);
    Tensor latent = Tensor::randn({1, kDataDim}, rng);
    AdamState adam(cfg.opt);
    adam.init({&latent});

    const auto grid = teacher.schedule().even_step_grid(decode_steps);
    std::vector<double> trajectory;
    Tensor last_x0;

    for (int iter = 0; iter < k; ++iter) {
        ad::Tape tape;
        ModelVars mv = teacher.vars_on(tape, false);
        ad::Var x = tape.leaf(latent, true);
        ad::Var cur = x;
        const long fw_before = counter.teacher_forward;
        for (int i = 0; i < decode_steps; ++i) {
            const int t = grid[i];
            const int t_next = i + 1 < decode_steps ? grid[i + 1] : 0;
            cur = diffusion::ddim_step_graph(teacher, tape, mv, cur, t, t_next, cfg.cond,
                                             cfg.cfg_weight, &counter);
        }
        ad::Var loss = controls::control_loss(tape, cur, target, embedder);
        const double lval = tape.value(loss)[0];
        if (!std::isfinite(lval))
            throw std::runtime_error("ditto_baseline: non-finite loss at iteration " +
                                     std::to_string(iter) + "; trajectory so far: " +
                                     dump_trajectory(trajectory));
        trajectory.push_back(lval);
        tape.backward(loss);
        // Backward-equivalent units: one per model call recorded on this tape.
        counter.teacher_backward += counter.teacher_forward - fw_before;
        Tensor g = tape.grad(x);
        adam_step({&latent}, {&g}, adam);
        if (iter + 1 == k) last_x0 = tape.value(cur);
    }

    const long accounted = counter.teacher_forward + counter.teacher_backward;
    const long expected = 4L * k * decode_steps;
    if (accounted != expected)
        throw std::logic_error("ditto_baseline: accounted units " + std::to_string(accounted) +
                               " != 4KT = " + std::to_string(expected));

    ItoResult r;
    r.latent = std::move(latent);
    // The final optimization forward pass is the decode (M = T for DITTO).
    r.decoded = k > 0 ? to_grid(last_x0) : Tensor({kBins, kFrames});
    r.loss_trajectory = std::move(trajectory);
    r.calls = counter;
    r.accounted_units = accounted;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

}  // namespace ito
}  // namespace ditto
