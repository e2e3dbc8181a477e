#include "ditto/controls.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ditto/kernels.hpp"

namespace ditto::controls {

namespace {
constexpr double kLn10 = 2.302585092994046;

ad::Var as_grid(ad::Tape& tape, ad::Var x0_flat) {
    return tape.reshape(x0_flat, {kBins, kFrames});
}
}  // namespace

Task task_from_name(const std::string& name) {
    if (name == "intensity") return Task::Intensity;
    if (name == "melody") return Task::Melody;
    if (name == "structure") return Task::Structure;
    if (name == "inpaint") return Task::Inpaint;
    if (name == "outpaint") return Task::Outpaint;
    if (name == "embed") return Task::Embed;
    throw std::invalid_argument("unknown task: " + name);
}

std::string task_name(Task t) {
    switch (t) {
        case Task::Intensity: return "intensity";
        case Task::Melody: return "melody";
        case Task::Structure: return "structure";
        case Task::Inpaint: return "inpaint";
        case Task::Outpaint: return "outpaint";
        case Task::Embed: return "embed";
    }
    return "?";
}

Tensor chroma_assignment() {
    Tensor c({kChromaClasses, kBins});
    int count[kChromaClasses] = {0};
    for (int b = 0; b < kBins; ++b) count[b % kChromaClasses] += 1;
    for (int b = 0; b < kBins; ++b) {
        int cls = b % kChromaClasses;
        c.at(cls, b) = 1.0 / count[cls];
    }
    return c;
}

Tensor smoothing_matrix() {
    Tensor s({kFrames, kFrames});
    const int half = kSmoothWidth / 2;
    for (int j = 0; j < kFrames; ++j) {
        for (int k = -half; k <= half; ++k) {
            int i = j + k;
            if (i < 0) i = -i - 1;                       // reflect
            if (i >= kFrames) i = 2 * kFrames - i - 1;
            s.at(i, j) += 1.0 / kSmoothWidth;
        }
    }
    return s;
}

// -------------------------------------------------------------- intensity

ad::Var intensity_feature(ad::Tape& tape, ad::Var x0) {
    ad::Var x = tape.clamp_min(x0, kAmpFloor);
    // RMS over frequency bins per frame.
    ad::Var ms = tape.scale(tape.col_sum(tape.mul(x, x)), 1.0 / kBins);  // 1 x F
    ad::Var rms = tape.sqrt_(ms);
    ad::Var db = tape.scale(tape.log_(rms), 20.0 / kLn10);
    return tape.matmul(db, tape.constant(smoothing_matrix()));
}

ad::Var intensity_loss(ad::Tape& tape, ad::Var x0, const Tensor& target_curve) {
    if (static_cast<int>(target_curve.size()) != kFrames)
        throw std::invalid_argument("intensity_loss: target length " +
                                    std::to_string(target_curve.size()) + ", expected " +
                                    std::to_string(kFrames));
    Tensor row({1, kFrames});
    std::copy(target_curve.data(), target_curve.data() + kFrames, row.data());
    return tape.sq_dist(intensity_feature(tape, x0), tape.constant(std::move(row)));
}

// ----------------------------------------------------------------- melody

ad::Var chroma_feature(ad::Tape& tape, ad::Var x0) {
    ad::Var energy = tape.matmul(tape.constant(chroma_assignment()), tape.mul(x0, x0));
    ad::Var total = tape.col_sum(energy);  // 1 x F
    ad::Var dist = tape.divide(energy, tape.clamp_min(total, kChromaFloor));
    return tape.log_(tape.clamp_min(dist, kChromaFloor));
}

namespace {
void check_melody(const std::vector<int>& target) {
    if (static_cast<int>(target.size()) != kFrames)
        throw std::invalid_argument("melody target must have one class per frame");
    for (int c : target)
        if (c < 1 || c > kChromaClasses)
            throw std::invalid_argument("melody class " + std::to_string(c) +
                                        " outside {1..12}");
}
}  // namespace

ad::Var melody_loss(ad::Tape& tape, ad::Var x0, const std::vector<int>& target) {
    check_melody(target);
    Tensor onehot({kChromaClasses, kFrames});
    for (int f = 0; f < kFrames; ++f) onehot.at(target[f] - 1, f) = 1.0;
    ad::Var picked = tape.mul(chroma_feature(tape, x0), tape.constant(std::move(onehot)));
    return tape.scale(tape.sum(picked), -1.0 / kFrames);
}

double melody_accuracy(const Tensor& x0, const std::vector<int>& target) {
    check_melody(target);
    ad::Tape tape;
    ad::Var f = chroma_feature(tape, tape.constant(x0));
    const Tensor& lp = tape.value(f);
    int hits = 0;
    for (int fr = 0; fr < kFrames; ++fr) {
        int best = 0;
        for (int c = 1; c < kChromaClasses; ++c)
            if (lp.at(c, fr) > lp.at(best, fr)) best = c;
        if (best == target[fr] - 1) ++hits;
    }
    return static_cast<double>(hits) / kFrames;
}

// -------------------------------------------------------------- structure

ad::Var ss_matrix(ad::Tape& tape, ad::Var x0) {
    ad::Var frames = tape.transpose(x0);  // F x B rows = per-frame frequency profiles
    ad::Var centered = tape.sub(frames, tape.scale(tape.row_sum(frames), 1.0 / kBins));
    ad::Var norms = tape.sqrt_(tape.add_const(tape.row_sum(tape.mul(centered, centered)), 1e-12));
    ad::Var unit = tape.divide(centered, norms);
    return tape.matmul(unit, tape.transpose(unit));
}

ad::Var structure_loss(ad::Tape& tape, ad::Var x0, const Tensor& target_ssm) {
    if (target_ssm.rows() != kFrames || target_ssm.cols() != kFrames)
        throw std::invalid_argument("structure_loss: target must be " +
                                    std::to_string(kFrames) + " square");
    return tape.sq_dist(ss_matrix(tape, x0), tape.constant(target_ssm));
}

// ----------------------------------------------------- inpaint / outpaint

namespace {
MaskedReference make_masked(const Tensor& reference, bool inpaint) {
    if (reference.rows() != kBins || reference.cols() != kFrames)
        throw std::invalid_argument("masked reference must be " + std::to_string(kBins) + "x" +
                                    std::to_string(kFrames));
    Tensor mask({kBins, kFrames});
    for (int b = 0; b < kBins; ++b)
        for (int f = 0; f < kFrames; ++f) {
            bool lead = f < kOverlapFrames;
            bool tail = f >= kFrames - kOverlapFrames;
            if (inpaint ? (lead || tail) : lead) mask.at(b, f) = 1.0;
        }
    return {reference, mask, mask, 1};
}
}  // namespace

MaskedReference make_inpaint_target(const Tensor& reference) { return make_masked(reference, true); }
MaskedReference make_outpaint_target(const Tensor& reference) { return make_masked(reference, false); }

ad::Var overlap_loss(ad::Tape& tape, ad::Var x0, const MaskedReference& target) {
    ad::Var gen = tape.mul(x0, tape.constant(target.mask_gen));
    Tensor ref(target.reference.shape());
    kernels::mul(target.mask_ref.data(), target.reference.data(), ref.data(), ref.size());
    return tape.sq_dist(gen, tape.constant(std::move(ref)));
}

// -------------------------------------------------------------- embedding

ToyEmbedder::ToyEmbedder(unsigned long seed) {
    std::mt19937_64 rng(seed);
    w1_ = Tensor::randn({kDataDim, kHidden}, rng, 1.0 / std::sqrt(double(kDataDim)));
    b1_ = Tensor::randn({1, kHidden}, rng, 0.1);
    w2_ = Tensor::randn({kHidden, kEmbedDim}, rng, 1.0 / std::sqrt(double(kHidden)));
    b2_ = Tensor::randn({1, kEmbedDim}, rng, 0.1);
}

ad::Var ToyEmbedder::embed(ad::Tape& tape, ad::Var x0_flat) const {
    ad::Var h = tape.tanh_(tape.affine(x0_flat, tape.constant(w1_), tape.constant(b1_)));
    ad::Var e = tape.affine(h, tape.constant(w2_), tape.constant(b2_));
    ad::Var norm = tape.sqrt_(tape.add_const(tape.row_sum(tape.mul(e, e)), 1e-24));
    return tape.divide(e, norm);
}

Tensor ToyEmbedder::embed_value(const Tensor& x0) const {
    ad::Tape tape;
    Tensor flat({1, kDataDim});
    std::copy(x0.data(), x0.data() + kDataDim, flat.data());
    return tape.value(embed(tape, tape.constant(std::move(flat))));
}

ad::Var embed_similarity_loss(ad::Tape& tape, const ToyEmbedder& embedder, ad::Var x0_flat,
                              const Tensor& embed_target) {
    if (static_cast<int>(embed_target.size()) != ToyEmbedder::kEmbedDim)
        throw std::invalid_argument("embed target has wrong dimension");
    Tensor row({1, ToyEmbedder::kEmbedDim});
    std::copy(embed_target.data(), embed_target.data() + embed_target.size(), row.data());
    ad::Var e = embedder.embed(tape, x0_flat);
    // For unit vectors 1 - a.b == 0.5*|a-b|^2; the distance form hits 0
    // exactly when the embedding matches the target bit for bit.
    return tape.scale(tape.sq_dist(e, tape.constant(std::move(row))), 0.5);
}

// --------------------------------------------------------------- dispatch

void ControlTarget::validate() const {
    switch (task) {
        case Task::Intensity:
            if (static_cast<int>(intensity_curve.size()) != kFrames)
                throw std::invalid_argument("intensity target length mismatch");
            break;
        case Task::Melody:
            check_melody(melody);
            break;
        case Task::Structure: {
            if (ss_matrix.rows() != kFrames || ss_matrix.cols() != kFrames)
                throw std::invalid_argument("SS target must be square over frames");
            for (int i = 0; i < kFrames; ++i) {
                if (std::fabs(ss_matrix.at(i, i) - 1.0) > 1e-6)
                    throw std::invalid_argument("SS target diagonal must be 1");
                for (int j = 0; j < i; ++j)
                    if (std::fabs(ss_matrix.at(i, j) - ss_matrix.at(j, i)) > 1e-9)
                        throw std::invalid_argument("SS target must be symmetric");
            }
            break;
        }
        case Task::Inpaint:
        case Task::Outpaint: {
            for (std::size_t i = 0; i < masked.mask_gen.size(); ++i) {
                double g = masked.mask_gen[i], r = masked.mask_ref[i];
                if ((g != 0.0 && g != 1.0) || (r != 0.0 && r != 1.0))
                    throw std::invalid_argument("masks must be binary");
                if (g == 1.0 && r != 1.0)
                    throw std::invalid_argument("masks must agree over the overlap region");
            }
            break;
        }
        case Task::Embed: {
            double n = std::sqrt(kernels::sqnorm(embed.data(), embed.size()));
            if (std::fabs(n - 1.0) > 1e-6)
                throw std::invalid_argument("embed target must be unit-norm");
            break;
        }
    }
}

ad::Var control_loss(ad::Tape& tape, ad::Var x0_flat, const ControlTarget& target,
                     const ToyEmbedder& embedder) {
    switch (target.task) {
        case Task::Intensity: return intensity_loss(tape, as_grid(tape, x0_flat), target.intensity_curve);
        case Task::Melody: return melody_loss(tape, as_grid(tape, x0_flat), target.melody);
        case Task::Structure: return structure_loss(tape, as_grid(tape, x0_flat), target.ss_matrix);
        case Task::Inpaint:
        case Task::Outpaint: return overlap_loss(tape, as_grid(tape, x0_flat), target.masked);
        case Task::Embed: return embed_similarity_loss(tape, embedder, x0_flat, target.embed);
    }
    throw std::logic_error("control_loss: bad task");
}

double control_metric(const Tensor& x0, const ControlTarget& target, const ToyEmbedder& embedder) {
    if (target.task == Task::Melody) return melody_accuracy(x0, target.melody);
    ad::Tape tape;
    Tensor flat({1, kDataDim});
    std::copy(x0.data(), x0.data() + kDataDim, flat.data());
    return tape.value(control_loss(tape, tape.constant(std::move(flat)), target, embedder))[0];
}

}  // namespace ditto::controls
