#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "ditto/bench.hpp"

using namespace ditto;
using namespace ditto::bench;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Per-frame energy envelope, mean-removed.
std::vector<double> envelope(const Tensor& spec) {
    std::vector<double> e(kFrames, 0.0);
    double mean = 0.0;
    for (int f = 0; f < kFrames; ++f) {
        for (int b = 0; b < kBins; ++b) e[f] += spec.at(b, f);
        mean += e[f];
    }
    mean /= kFrames;
    for (double& v : e) v -= mean;
    return e;
}

double autocorr(const std::vector<double>& e, int lag) {
    double mu = 0.0;
    for (int f = 0; f < kFrames; ++f) mu += e[f];
    mu /= kFrames;
    double num = 0.0, den = 0.0;
    for (int f = 0; f + lag < kFrames; ++f) num += (e[f] - mu) * (e[f + lag] - mu);
    for (int f = 0; f < kFrames; ++f) den += (e[f] - mu) * (e[f] - mu);
    den *= static_cast<double>(kFrames - lag) / kFrames;  // match term counts
    return num / den;
}

LabeledSample sample_with_tempo(int tempo, unsigned long seed) {
    SynthDatasetSpec spec{1000, seed};
    for (int i = 0; i < spec.count; ++i) {
        LabeledSample s = synth_sample(spec, i);
        if (s.cond.tempo == tempo) return s;
    }
    throw std::runtime_error("no sample with requested tempo");
}

}  // namespace

TEST_CASE("synthetic samples are a pure function of (seed, index)") {
    SynthDatasetSpec spec{4, 101};
    for (int i = 0; i < 4; ++i) {
        LabeledSample a = synth_sample(spec, i);
        LabeledSample b = synth_sample(spec, i);
        CHECK(max_abs_diff(a.spec, b.spec) == 0.0);
        CHECK(a.cond.tempo == b.cond.tempo);
        CHECK(a.cond.mood == b.cond.mood);
    }
    CHECK(max_abs_diff(synth_sample(spec, 0).spec, synth_sample(spec, 1).spec) > 0.0);
    CHECK(synth_generate(spec).size() == 4);
}

TEST_CASE("tempo class sets the envelope period") {
    for (int tempo = 0; tempo < kTempoClasses; ++tempo) {
        LabeledSample s = sample_with_tempo(tempo, 55 + tempo);
        std::vector<double> e = envelope(s.spec);
        const int period = kTempoPeriods[tempo];
        CHECK(autocorr(e, period) > 0.5);
        CHECK(autocorr(e, period / 2) < 0.0);  // anti-phase at half period
    }
}

TEST_CASE("mood classes occupy disjoint pitch-class sets") {
    std::set<int> seen[kMoodClasses];
    SynthDatasetSpec spec{400, 77};
    Tensor assign = controls::chroma_assignment();
    for (int i = 0; i < spec.count; ++i) {
        LabeledSample s = synth_sample(spec, i);
        // Dominant chroma class per frame must be an active mood bin.
        ad::Tape tape;
        Tensor lp = tape.value(controls::chroma_feature(tape, tape.leaf(s.spec, false)));
        for (int f = 0; f < kFrames; ++f) {
            int best = 0;
            for (int c = 1; c < controls::kChromaClasses; ++c)
                if (lp.at(c, f) > lp.at(best, f)) best = c;
            seen[s.cond.mood].insert(best);
        }
    }
    for (int a = 0; a < kMoodClasses; ++a) {
        CHECK(!seen[a].empty());
        for (int b = a + 1; b < kMoodClasses; ++b)
            for (int cls : seen[a]) CHECK(seen[b].count(cls) == 0);
    }
}

TEST_CASE("jacobi eigensolver reconstructs a symmetric matrix") {
    std::mt19937_64 rng(5);
    const int n = 6;
    Tensor a({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            std::normal_distribution<double> g;
            a.at(i, j) = a.at(j, i) = g(rng);
        }
    Tensor v;
    std::vector<double> eig = jacobi_eigh(a, v);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double av = 0.0, vd = 0.0, dot = 0.0;
            for (int k = 0; k < n; ++k) {
                av += a.at(i, k) * v.at(k, j);
                dot += v.at(k, i) * v.at(k, j);
            }
            vd = v.at(i, j) * eig[j];
            CHECK(av == doctest::Approx(vd).epsilon(1e-9));
            CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
        }
}

TEST_CASE("frechet distance closed forms") {
    const int d = 2;
    GaussianFit a{Tensor({d, 1}), Tensor({d, d})};
    for (int i = 0; i < d; ++i) a.cov.at(i, i) = 1.0;
    GaussianFit b = a;
    CHECK(frechet_distance(a, b) == doctest::Approx(0.0).epsilon(1e-8));

    b.mean[0] = 1.0;  // unit mean shift, identity covariances
    CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(frechet_distance(b, a) == doctest::Approx(frechet_distance(a, b)).epsilon(1e-10));

    GaussianFit s1{Tensor({1, 1}), Tensor({1, 1})};
    GaussianFit s2{Tensor({1, 1}), Tensor({1, 1})};
    s1.cov[0] = 1.0;
    s2.cov[0] = 4.0;  // sigma 1 vs 2 -> (1-2)^2
    CHECK(frechet_distance(s1, s2) == doctest::Approx(1.0).epsilon(1e-8));

    GaussianFit wrong{Tensor({3, 1}), Tensor({3, 3})};
    CHECK_THROWS(frechet_distance(a, wrong));
}

TEST_CASE("eval_quality separates data from noise and is stable") {
    controls::ToyEmbedder embedder;
    GaussianFit ref = reference_fit(synth_generate({1000, 1}), embedder);

    std::vector<Tensor> held;
    for (int i = 0; i < 400; ++i) held.push_back(synth_sample({400, 2}, i).spec);
    const double data_dist = eval_quality(held, ref, embedder);

    std::mt19937_64 rng(3);
    std::vector<Tensor> noise_small, noise_big;
    for (int i = 0; i < 800; ++i) {
        Tensor n = Tensor::randn({kBins, kFrames}, rng);
        if (i < 400) noise_small.push_back(n);
        noise_big.push_back(std::move(n));
    }
    const double noise_dist = eval_quality(noise_small, ref, embedder);
    CHECK(noise_dist > 5.0 * data_dist);

    // Doubling the sample count moves the estimate by < 10%.
    const double noise_dist2 = eval_quality(noise_big, ref, embedder);
    CHECK(std::abs(noise_dist2 - noise_dist) < 0.10 * noise_dist);

    std::vector<Tensor> too_few(held.begin(), held.begin() + 100);
    CHECK_THROWS(eval_quality(too_few, ref, embedder));
}

TEST_CASE("sweep runs all cells, survives failures and reports speedups") {
    DenoiserModel teacher(false, 8, 4, NoiseSchedule(20));
    std::mt19937_64 rng(5);
    teacher.params().w_out = Tensor::randn({8, kDataDim}, rng, 0.1);
    DenoiserModel cm = DenoiserModel::student_from_teacher(teacher);
    DenoiserModel ctm = DenoiserModel::student_from_teacher(teacher);

    controls::ToyEmbedder embedder;
    GaussianFit ref = reference_fit(synth_generate({400, 6}), embedder);

    SweepConfig cfg;
    cfg.k = 2;
    cfg.timing_reps = 1;
    cfg.fad_samples = 320;
    cfg.cells = {{"base", "ditto", 20, 2, false},
                 {"cm-1-1", "ditto2-cm", 1, 1, false},
                 {"ctm-2-2", "ditto2-ctm", 2, 2, false},
                 {"broken", "no-such-method", 1, 1, false}};

    const std::string out = "sweep_test_out";
    std::filesystem::create_directories(out);
    auto recs = sweep(cfg, teacher, cm, ctm, ref, embedder, out);
    REQUIRE(recs.size() == 4);
    CHECK(recs[0].ok);
    CHECK(recs[1].ok);
    CHECK(recs[2].ok);
    CHECK(!recs[3].ok);
    CHECK(!recs[3].note.empty());

    CHECK(recs[0].accounted_units == 4 * 2 * 2);
    CHECK(recs[1].accounted_units == 2 * 1 + 1);
    CHECK(recs[2].accounted_units == 2 * 2 + 2);
    // Units strictly decrease as M decreases at fixed K.
    CHECK(recs[1].accounted_units < recs[2].accounted_units);

    CHECK(std::filesystem::exists(out + "/records.csv"));
    CHECK(std::filesystem::exists(out + "/speedups.csv"));
    CHECK(std::filesystem::exists(out + "/plot_tradeoff.csv"));
    CHECK(std::filesystem::exists(out + "/plot_tradeoff.svg"));

    // Reproducibility of control metrics (wall-clock excluded).
    auto again = sweep(cfg, teacher, cm, ctm, ref, embedder, out);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(again[i].control_metric == recs[i].control_metric);
        CHECK(again[i].frechet == recs[i].frechet);
    }
    std::filesystem::remove_all(out);
}

TEST_CASE("run record row shape matches the header") {
    RunRecord r;
    const std::string header = RunRecord::csv_header();
    const auto fields = r.csv_fields();
    std::size_t commas = std::count(header.begin(), header.end(), ',');
    CHECK(fields.size() == commas + 1);
}
