#include "ditto/scorenet.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace ditto {

namespace {

// Indices into DenoiserParams::list() order.
constexpr int kIdxWIn = 0, kIdxBIn = 1;
constexpr int kIdxBlock0 = 2;  // w1,b1,w2,b2 per block
constexpr int kIdxWOut = kIdxBlock0 + 4 * DenoiserParams::kBlocks;
constexpr int kIdxBOut = kIdxWOut + 1;
constexpr int kIdxWTime = kIdxBOut + 1;
constexpr int kIdxTempo = kIdxWTime + 1;
constexpr int kIdxMood = kIdxTempo + 1;
constexpr int kIdxSkip = kIdxMood + 1;
constexpr int kIdxWCfg = kIdxSkip + 1;

Tensor flat_row(const Tensor& x) {
    if (static_cast<int>(x.size()) != kDataDim)
        throw std::invalid_argument("latent size mismatch: got " + x.shape_str());
    Tensor r({1, kDataDim});
    std::copy(x.data(), x.data() + kDataDim, r.data());
    return r;
}

Tensor reshape_like(const Tensor& flat, const Tensor& like) {
    Tensor out(like.shape());
    std::copy(flat.data(), flat.data() + flat.size(), out.data());
    return out;
}

}  // namespace

std::vector<Tensor*> DenoiserParams::list(bool student) {
    std::vector<Tensor*> v{&w_in, &b_in};
    for (int k = 0; k < kBlocks; ++k) {
        v.push_back(&w1[k]);
        v.push_back(&b1[k]);
        v.push_back(&w2[k]);
        v.push_back(&b2[k]);
    }
    v.push_back(&w_out);
    v.push_back(&b_out);
    v.push_back(&w_time);
    v.push_back(&tempo_table);
    v.push_back(&mood_table);
    v.push_back(&skip_alpha);
    if (student) v.push_back(&w_cfg);
    return v;
}

std::vector<const Tensor*> DenoiserParams::list(bool student) const {
    auto mut = const_cast<DenoiserParams*>(this)->list(student);
    return {mut.begin(), mut.end()};
}

std::vector<std::string> DenoiserParams::names(bool student) {
    std::vector<std::string> v{"w_in", "b_in"};
    for (int k = 0; k < kBlocks; ++k) {
        std::string s = std::to_string(k);
        v.push_back("w1." + s);
        v.push_back("b1." + s);
        v.push_back("w2." + s);
        v.push_back("b2." + s);
    }
    v.insert(v.end(), {"w_out", "b_out", "w_time", "tempo_table", "mood_table", "skip_alpha"});
    if (student) v.push_back("w_cfg");
    return v;
}

DenoiserModel::DenoiserModel(bool student, int hidden, unsigned long seed, NoiseSchedule schedule)
    : student_(student), hidden_(hidden), schedule_(std::move(schedule)) {
    std::mt19937_64 rng(seed);
    auto winit = [&](int rows, int cols) {
        return Tensor::randn({rows, cols}, rng, 1.0 / std::sqrt(static_cast<double>(rows)));
    };
    params_.w_in = winit(kDataDim, hidden);
    params_.b_in = Tensor({1, hidden});
    for (int k = 0; k < DenoiserParams::kBlocks; ++k) {
        params_.w1[k] = winit(hidden, hidden);
        params_.b1[k] = Tensor({1, hidden});
        params_.w2[k] = winit(hidden, hidden);
        params_.b2[k] = Tensor({1, hidden});
    }
    // Zero final layer: a fresh model predicts zero noise everywhere.
    params_.w_out = Tensor({hidden, kDataDim});
    params_.b_out = Tensor({1, kDataDim});
    params_.w_time = winit(kTimeFeatDim, hidden);
    params_.tempo_table = Tensor::randn({kTempoClasses + 1, hidden}, rng, 0.1);
    params_.mood_table = Tensor::randn({kMoodClasses + 1, hidden}, rng, 0.1);
    // Zero-init skip gain: a fresh model still predicts zero noise, but
    // training can quickly learn the eps ~ sigma(t)*x_t prior that keeps
    // the 1/signal(t) amplification of the x0 anchor under control.
    params_.skip_alpha = Tensor({1, 1});
    params_.w_cfg = student ? Tensor({kCfgFeatDim, hidden}) : Tensor();
}

DenoiserModel DenoiserModel::student_from_teacher(const DenoiserModel& teacher) {
    DenoiserModel s;
    s.student_ = true;
    s.hidden_ = teacher.hidden_;
    s.schedule_ = teacher.schedule_;
    s.params_ = teacher.params_;
    // Zero CFG pathway: the fresh student reproduces the teacher exactly
    // for every w until distillation trains the embedding.
    s.params_.w_cfg = Tensor({kCfgFeatDim, teacher.hidden_});
    return s;
}

std::size_t DenoiserModel::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : params_.list(student_)) n += t->size();
    return n;
}

ModelVars DenoiserModel::vars_on(ad::Tape& tape, bool requires_grad) const {
    ModelVars mv;
    for (const Tensor* t : params_.list(student_))
        mv.vars.push_back(tape.leaf(*t, requires_grad));
    return mv;
}

std::vector<double> DenoiserModel::time_features(double t, int t_max) {
    std::vector<double> f(kTimeFeatDim);
    double omega = std::numbers::pi / (2.0 * t_max);
    for (int k = 0; k < kTimeFeatDim / 2; ++k) {
        f[2 * k] = std::sin(omega * t);
        f[2 * k + 1] = std::cos(omega * t);
        omega *= 1.36;
    }
    return f;
}

std::vector<double> DenoiserModel::cfg_features(double w) {
    std::vector<double> f(kCfgFeatDim);
    double nu = 0.25;
    for (int k = 0; k < kCfgFeatDim / 2; ++k) {
        f[2 * k] = std::sin(nu * w);
        f[2 * k + 1] = std::cos(nu * w);
        nu *= 1.7;
    }
    return f;
}

void DenoiserModel::check_condition(const Condition& c) const {
    if (c.tempo < -1 || c.tempo >= kTempoClasses)
        throw std::invalid_argument("unknown tempo tag id " + std::to_string(c.tempo));
    if (c.mood < -1 || c.mood >= kMoodClasses)
        throw std::invalid_argument("unknown mood tag id " + std::to_string(c.mood));
}

ad::Var DenoiserModel::net_forward(ad::Tape& tape, const ModelVars& mv, ad::Var x,
                                   const std::vector<double>& t,
                                   const std::vector<Condition>& cond,
                                   const std::vector<double>* w) const {
    const int B = tape.value(x).rows();
    if (static_cast<int>(t.size()) != B || static_cast<int>(cond.size()) != B)
        throw std::invalid_argument("net_forward: batch size mismatch");
    if (student_ && (!w || static_cast<int>(w->size()) != B))
        throw std::invalid_argument("net_forward: student requires per-row CFG weights");

    Tensor tf({B, kTimeFeatDim});
    std::vector<int> tempo_ids(B), mood_ids(B);
    for (int i = 0; i < B; ++i) {
        check_condition(cond[i]);
        auto f = time_features(t[i], schedule_.t_max());
        std::copy(f.begin(), f.end(), tf.data() + static_cast<std::size_t>(i) * kTimeFeatDim);
        tempo_ids[i] = cond[i].tempo < 0 ? kTempoClasses : cond[i].tempo;
        mood_ids[i] = cond[i].mood < 0 ? kMoodClasses : cond[i].mood;
    }

    const auto& v = mv.vars;
    ad::Var cvec = tape.matmul(tape.constant(std::move(tf)), v[kIdxWTime]);
    cvec = tape.add(cvec, tape.gather_rows(v[kIdxTempo], tempo_ids));
    cvec = tape.add(cvec, tape.gather_rows(v[kIdxMood], mood_ids));
    if (student_) {
        Tensor wf({B, kCfgFeatDim});
        for (int i = 0; i < B; ++i) {
            auto f = cfg_features((*w)[i]);
            std::copy(f.begin(), f.end(), wf.data() + static_cast<std::size_t>(i) * kCfgFeatDim);
        }
        cvec = tape.add(cvec, tape.matmul(tape.constant(std::move(wf)), v[kIdxWCfg]));
    }

    ad::Var h = tape.tanh_(tape.add(tape.affine(x, v[kIdxWIn], v[kIdxBIn]), cvec));
    for (int k = 0; k < DenoiserParams::kBlocks; ++k) {
        const int base = kIdxBlock0 + 4 * k;
        ad::Var inner = tape.tanh_(tape.affine(h, v[base], v[base + 1]));
        h = tape.add(h, tape.affine(inner, v[base + 2], v[base + 3]));
    }
    ad::Var out = tape.affine(h, v[kIdxWOut], v[kIdxBOut]);
    Tensor srow({B, 1});
    for (int i = 0; i < B; ++i) srow[i] = schedule_.sigma(t[i]);
    ad::Var gain = tape.matmul(tape.constant(std::move(srow)), v[kIdxSkip]);
    return tape.add(out, tape.mul(x, gain));
}

ad::Var DenoiserModel::eps_forward_graph(ad::Tape& tape, const ModelVars& mv, ad::Var x_t,
                                         double t, const Condition& c,
                                         CallCounter* counter) const {
    if (t < 0.0 || t > schedule_.t_max())
        throw std::invalid_argument("eps_forward: t out of range");
    if (counter) counter->teacher_forward += 1;
    return net_forward(tape, mv, x_t, {t}, {c}, nullptr);
}

Tensor DenoiserModel::eps_forward(const Tensor& x_t, double t, const Condition& c,
                                  CallCounter* counter) const {
    ad::Tape tape;
    ModelVars mv = vars_on(tape, false);
    ad::Var x = tape.constant(flat_row(x_t));
    ad::Var out = eps_forward_graph(tape, mv, x, t, c, counter);
    return reshape_like(tape.value(out), x_t);
}

ad::Var DenoiserModel::g_forward_graph(ad::Tape& tape, const ModelVars& mv, ad::Var x_t,
                                       const Condition& c, double w, double t, double s,
                                       CallCounter* counter) const {
    if (!student_) throw std::logic_error("g_forward: teacher has no trajectory pathway");
    if (s > t + 1e-12) throw std::invalid_argument("g_forward: requires s <= t");
    if (counter) counter->student_steps += 1;
    // Boundary identities: s = t (including t = s = 0) is an exact no-op.
    if (s >= t - 1e-12 || t <= 1e-12) return x_t;

    const double sig_t = schedule_.sigma(t);
    const double sig_s = schedule_.sigma(s);
    const double ratio = sig_s / sig_t;
    std::vector<double> ws{w};
    ad::Var eps = net_forward(tape, mv, x_t, {t}, {c}, &ws);
    // Clean-data anchor recovered from the noise prediction.
    ad::Var anchor = tape.scale(tape.sub(x_t, tape.scale(eps, sig_t)), 1.0 / schedule_.signal(t));
    return tape.add(tape.scale(x_t, ratio), tape.scale(anchor, 1.0 - ratio));
}

ad::Var DenoiserModel::g_forward_graph_batch(ad::Tape& tape, const ModelVars& mv, ad::Var x,
                                             const std::vector<Condition>& cond,
                                             const std::vector<double>& w,
                                             const std::vector<double>& t,
                                             const std::vector<double>& s,
                                             CallCounter* counter) const {
    if (!student_) throw std::logic_error("g_forward: teacher has no trajectory pathway");
    const int B = tape.value(x).rows();
    Tensor ratio({B, 1}), sig_t({B, 1}), inv_sig({B, 1});
    for (int i = 0; i < B; ++i) {
        if (s[i] > t[i] + 1e-12) throw std::invalid_argument("g_forward: requires s <= t");
        if (t[i] <= 1e-12) throw std::invalid_argument("g_forward batch: t must be positive");
        sig_t[i] = schedule_.sigma(t[i]);
        ratio[i] = schedule_.sigma(s[i]) / sig_t[i];
        inv_sig[i] = 1.0 / schedule_.signal(t[i]);
    }
    if (counter) counter->student_steps += B;
    ad::Var eps = net_forward(tape, mv, x, t, cond, &w);
    ad::Var anchor = tape.mul(tape.sub(x, tape.mul(eps, tape.constant(sig_t))),
                              tape.constant(std::move(inv_sig)));
    Tensor one_minus(ratio.shape());
    for (int i = 0; i < B; ++i) one_minus[i] = 1.0 - ratio[i];
    return tape.add(tape.mul(x, tape.constant(std::move(ratio))),
                    tape.mul(anchor, tape.constant(std::move(one_minus))));
}

// Checkpoint layout: magic, version, model meta, shapes manifest, then flat
// little-endian float64 parameter data in list() order.
namespace {
constexpr char kMagic[4] = {'D', 'T', '2', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
}  // namespace

void DenoiserModel::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod<std::uint8_t>(os, student_ ? 1 : 0);
    write_pod<std::int32_t>(os, hidden_);
    write_pod<std::int32_t>(os, schedule_.t_max());

    auto tensors = params_.list(student_);
    auto names = DenoiserParams::names(student_);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(names[i].size()));
        os.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
        const auto& shape = tensors[i]->shape();
        write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
        for (int e : shape) write_pod<std::int32_t>(os, e);
    }
    for (const Tensor* t : tensors)
        os.write(reinterpret_cast<const char*>(t->data()),
                 static_cast<std::streamsize>(t->size() * sizeof(double)));
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

DenoiserModel DenoiserModel::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (read_pod<std::uint32_t>(is) != kVersion)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    bool student = read_pod<std::uint8_t>(is) != 0;
    int hidden = read_pod<std::int32_t>(is);
    int t_max = read_pod<std::int32_t>(is);
    if (hidden <= 0 || t_max <= 0)
        throw std::runtime_error("checkpoint: corrupt header in " + path);

    DenoiserModel m(student, hidden, 0, NoiseSchedule(t_max));
    auto tensors = m.params_.list(student);
    auto names = DenoiserParams::names(student);
    std::uint32_t count = read_pod<std::uint32_t>(is);
    if (count != tensors.size())
        throw std::runtime_error("checkpoint: manifest tensor count mismatch in " + path);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        std::uint16_t len = read_pod<std::uint16_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (name != names[i])
            throw std::runtime_error("checkpoint: manifest name mismatch, expected " +
                                     names[i] + " got " + name);
        std::uint8_t ndim = read_pod<std::uint8_t>(is);
        std::vector<int> shape(ndim);
        for (auto& e : shape) e = read_pod<std::int32_t>(is);
        if (shape != tensors[i]->shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + names[i]);
    }
    for (Tensor* t : tensors) {
        is.read(reinterpret_cast<char*>(t->data()),
                static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!is) throw std::runtime_error("checkpoint: truncated data in " + path);
    return m;
}

Tensor DenoiserModel::g_forward(const Tensor& x_t, const Condition& c, double w, double t,
                                double s, CallCounter* counter) const {
    ad::Tape tape;
    ModelVars mv = vars_on(tape, false);
    ad::Var x = tape.constant(flat_row(x_t));
    ad::Var out = g_forward_graph(tape, mv, x, c, w, t, s, counter);
    return reshape_like(tape.value(out), x_t);
}

}  // namespace ditto
