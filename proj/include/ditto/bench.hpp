#pragma once

// Synthetic dataset generation, Frechet quality metric over toy
// embeddings, and the speed/quality sweep harness.

#include <string>
#include <vector>

#include "ditto/controls.hpp"
#include "ditto/diffusion.hpp"
#include "ditto/ito.hpp"

namespace ditto::bench {

// Tempo class -> amplitude-envelope period in frames.
inline constexpr int kTempoPeriods[kTempoClasses] = {16, 8, 4};
// Mood class -> active spectrogram bins (disjoint pitch-class sets).
inline constexpr int kMoodBins[kMoodClasses][3] = {
    {0, 4, 8}, {1, 5, 9}, {2, 6, 10}, {3, 7, 11}};

struct SynthDatasetSpec {
    int count = 0;
    unsigned long seed = 0;
};

// Harmonic-template spectrograms: mood picks the active bins, tempo the
// envelope period. Pure function of (spec.seed, index).
LabeledSample synth_sample(const SynthDatasetSpec& spec, int index);
Dataset synth_generate(const SynthDatasetSpec& spec);

struct GaussianFit {
    Tensor mean;  // d x 1
    Tensor cov;   // d x d
};

// rows of `features` are samples.
GaussianFit fit_gaussian(const Tensor& features);

// Cyclic Jacobi for symmetric matrices; returns eigenvalues and writes the
// orthonormal eigenvectors as columns of `vecs`.
std::vector<double> jacobi_eigh(const Tensor& sym, Tensor& vecs, double tol = 1e-12);

// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2); matrix square
// roots via symmetric eigendecomposition with negative eigenvalues
// clamped to zero.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

// Embed ToySpectrograms, fit a Gaussian, compare against the reference.
// Requires at least 10x the embedding dimension many samples.
double eval_quality(const std::vector<Tensor>& samples, const GaussianFit& reference,
                    const controls::ToyEmbedder& embedder);

GaussianFit reference_fit(const Dataset& data, const controls::ToyEmbedder& embedder);

struct RunRecord {
    std::string cell;
    std::string method;  // ditto | ditto2-cm | ditto2-ctm
    int m = 0;           // 0 = adaptive
    int t = 0;
    int k = 0;
    double gamma = 0.0;
    double w = 0.0;
    unsigned long seed = 0;
    double control_metric = 0.0;
    double frechet = 0.0;
    long forward_calls = 0;
    long backward_calls = 0;
    long student_steps = 0;
    long accounted_units = 0;
    double wall_seconds = 0.0;
    bool ok = true;
    std::string note;

    static std::string csv_header();
    std::vector<std::string> csv_fields() const;
};

struct SweepCell {
    std::string name;
    std::string method;
    int m = 1;  // ignored when adaptive
    int t = 1;
    bool adaptive = false;
};

struct SweepConfig {
    std::vector<SweepCell> cells;
    int k = 40;
    double gamma = 0.2;
    double cfg_weight = 3.0;
    unsigned long seed = 0;
    int fad_samples = 320;
    int timing_reps = 3;  // wall-clock = median over reps
    int workers = 1;
};

// Default grid mirroring the trade-off table: the full-chain baseline plus
// the distilled cells.
std::vector<SweepCell> default_cells();

// Runs every cell against a shared intensity target; failures are recorded
// and the sweep continues. Writes records, speedups vs the first ditto
// cell, and scatter plot data under out_dir.
std::vector<RunRecord> sweep(const SweepConfig& cfg, const DenoiserModel& teacher,
                             const DenoiserModel& cm_student, const DenoiserModel& ctm_student,
                             const GaussianFit& reference, const controls::ToyEmbedder& embedder,
                             const std::string& out_dir);

}  // namespace ditto::bench
