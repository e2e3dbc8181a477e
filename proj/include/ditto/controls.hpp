#pragma once

// Differentiable feature extractors f(.) and matching losses for the
// control tasks: intensity, melody, structure, inpainting/outpainting and
// embedding similarity. All extractors build on the autodiff tape; value
// helpers exist where metrics are reported without gradients.

#include <string>
#include <vector>

#include "ditto/autodiff.hpp"
#include "ditto/scorenet.hpp"

namespace ditto::controls {

inline constexpr int kChromaClasses = 12;
inline constexpr double kAmpFloor = 1e-5;    // -100 dB
inline constexpr double kChromaFloor = 1e-8;
inline constexpr int kSmoothWidth = 5;
inline constexpr int kOverlapFrames = 5;     // o=1 overlap unit on the toy grid

enum class Task { Intensity, Melody, Structure, Inpaint, Outpaint, Embed };

Task task_from_name(const std::string& name);
std::string task_name(Task t);

struct MaskedReference {
    Tensor reference;  // kBins x kFrames
    Tensor mask_gen;   // binary, same shape
    Tensor mask_ref;   // binary, same shape
    int overlap_len = 1;
};

// Central gap: the leading and trailing overlap units are pinned to the
// reference and the middle is free.
MaskedReference make_inpaint_target(const Tensor& reference);
// Leading overlap unit pinned; the continuation is free.
MaskedReference make_outpaint_target(const Tensor& reference);

struct ControlTarget {
    Task task = Task::Intensity;
    Tensor intensity_curve;       // 1 x kFrames, dB
    std::vector<int> melody;      // kFrames entries in {1..12}
    Tensor ss_matrix;             // kFrames x kFrames
    MaskedReference masked;
    Tensor embed;                 // unit-norm vector

    void validate() const;  // enforces the per-variant invariants
};

// Frozen random-projection embedder standing in for a pretrained audio
// encoder; outputs are unit-norm.
class ToyEmbedder {
public:
    static constexpr int kEmbedDim = 32;
    static constexpr int kHidden = 64;

    explicit ToyEmbedder(unsigned long seed = 424242);
    ad::Var embed(ad::Tape& tape, ad::Var x0_flat) const;  // (B x 512) -> (B x 32)
    Tensor embed_value(const Tensor& x0) const;            // single sample

private:
    Tensor w1_, b1_, w2_, b2_;
};

// Extractors. x0 is a (kBins x kFrames) tape var.
ad::Var intensity_feature(ad::Tape& tape, ad::Var x0);                // 1 x kFrames, dB
ad::Var chroma_feature(ad::Tape& tape, ad::Var x0);                   // 12 x kFrames log-probs
ad::Var ss_matrix(ad::Tape& tape, ad::Var x0);                        // kFrames x kFrames

// Losses.
ad::Var intensity_loss(ad::Tape& tape, ad::Var x0, const Tensor& target_curve);
ad::Var melody_loss(ad::Tape& tape, ad::Var x0, const std::vector<int>& target);
ad::Var structure_loss(ad::Tape& tape, ad::Var x0, const Tensor& target_ssm);
ad::Var overlap_loss(ad::Tape& tape, ad::Var x0, const MaskedReference& target);
ad::Var embed_similarity_loss(ad::Tape& tape, const ToyEmbedder& embedder, ad::Var x0_flat,
                              const Tensor& embed_target);

// Dispatch used by the optimization engine; x0_flat is (1 x kDataDim).
ad::Var control_loss(ad::Tape& tape, ad::Var x0_flat, const ControlTarget& target,
                     const ToyEmbedder& embedder);

// Value-level metrics.
double melody_accuracy(const Tensor& x0, const std::vector<int>& target);
double control_metric(const Tensor& x0, const ControlTarget& target, const ToyEmbedder& embedder);

// Fixed bin -> pitch-class assignment (round-robin; classes 1..4 own two
// bins). Returned matrix is kChromaClasses x kBins with rows averaging the
// member bins.
Tensor chroma_assignment();

// Width-5 moving-average smoothing matrix with reflected boundaries,
// kFrames x kFrames, applied as curve * S.
Tensor smoothing_matrix();

}  // namespace ditto::controls
