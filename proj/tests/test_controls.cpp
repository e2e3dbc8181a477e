#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ditto/controls.hpp"

using namespace ditto;
using namespace ditto::controls;

namespace {

Tensor grid_of(double v) {
    Tensor x({kBins, kFrames});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = v;
    return x;
}

Tensor eval_feature(ad::Var (*feature)(ad::Tape&, ad::Var), const Tensor& x) {
    ad::Tape tape;
    return tape.value(feature(tape, tape.leaf(x, false)));
}

double eval_scalar(const std::function<ad::Var(ad::Tape&, ad::Var)>& f, const Tensor& x) {
    ad::Tape tape;
    return tape.value(f(tape, tape.leaf(x, false)))[0];
}

}  // namespace

TEST_CASE("intensity of a constant spectrogram is its dB level") {
    Tensor curve = eval_feature(intensity_feature, grid_of(0.5));
    REQUIRE(curve.size() == kFrames);
    for (std::size_t i = 0; i < curve.size(); ++i)
        CHECK(curve[i] == doctest::Approx(20.0 * std::log10(0.5)).epsilon(1e-10));

    Tensor floor_curve = eval_feature(intensity_feature, grid_of(0.0));
    for (std::size_t i = 0; i < floor_curve.size(); ++i)
        CHECK(floor_curve[i] == doctest::Approx(-100.0).epsilon(1e-10));
}

TEST_CASE("global gain shifts the intensity curve uniformly") {
    std::mt19937_64 rng(1);
    Tensor x({kBins, kFrames});
    std::uniform_real_distribution<double> unif(0.1, 1.5);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = unif(rng);
    Tensor doubled = x;
    for (std::size_t i = 0; i < x.size(); ++i) doubled[i] *= 2.0;

    Tensor a = eval_feature(intensity_feature, x);
    Tensor b = eval_feature(intensity_feature, doubled);
    const double shift = 20.0 * std::log10(2.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(b[i] - a[i] == doctest::Approx(shift).epsilon(1e-9));
}

TEST_CASE("intensity loss: fixed point and 1 dB offset arithmetic") {
    std::mt19937_64 rng(2);
    Tensor x({kBins, kFrames});
    std::uniform_real_distribution<double> unif(0.1, 1.5);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = unif(rng);
    Tensor own = eval_feature(intensity_feature, x);
    Tensor own_row({1, kFrames});
    for (int i = 0; i < kFrames; ++i) own_row[i] = own[i];

    CHECK(eval_scalar([&](ad::Tape& t, ad::Var v) { return intensity_loss(t, v, own_row); }, x) ==
          0.0);

    Tensor offset = own_row;
    for (int i = 0; i < kFrames; ++i) offset[i] += 1.0;
    CHECK(eval_scalar([&](ad::Tape& t, ad::Var v) { return intensity_loss(t, v, offset); }, x) ==
          doctest::Approx(32.0).epsilon(1e-9));

    Tensor bad({1, kFrames - 1});
    CHECK_THROWS(eval_scalar([&](ad::Tape& t, ad::Var v) { return intensity_loss(t, v, bad); }, x));
}

TEST_CASE("chroma of uniform energy is the uniform distribution") {
    Tensor lp = eval_feature(chroma_feature, grid_of(0.7));
    REQUIRE(lp.rows() == kChromaClasses);
    REQUIRE(lp.cols() == kFrames);
    for (std::size_t i = 0; i < lp.size(); ++i)
        CHECK(lp[i] == doctest::Approx(-std::log(12.0)).epsilon(1e-9));

    std::vector<int> target(kFrames, 3);
    const double uniform_nll =
        eval_scalar([&](ad::Tape& t, ad::Var v) { return melody_loss(t, v, target); },
                    grid_of(0.7));
    CHECK(uniform_nll == doctest::Approx(std::log(12.0)).epsilon(1e-9));
}

TEST_CASE("energy concentrated in one pitch class wins the argmax") {
    Tensor assign = chroma_assignment();
    for (int cls = 0; cls < kChromaClasses; ++cls) {
        Tensor x({kBins, kFrames});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1e-6;
        for (int b = 0; b < kBins; ++b)
            if (assign.at(cls, b) > 0.0)
                for (int f = 0; f < kFrames; ++f) x.at(b, f) = 1.0;

        std::vector<int> target(kFrames, cls + 1);  // classes are 1-based in targets
        CHECK(melody_accuracy(x, target) == 1.0);
        const double nll =
            eval_scalar([&](ad::Tape& t, ad::Var v) { return melody_loss(t, v, target); }, x);
        CHECK(nll < 1e-3);
    }
}

TEST_CASE("random argmax matches a random target about 1/12 of the time") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    long hits = 0, frames = 0;
    for (int rep = 0; rep < 40; ++rep) {
        Tensor x({kBins, kFrames});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = unif(rng);
        std::vector<int> target(kFrames);
        for (int f = 0; f < kFrames; ++f) target[f] = 1 + static_cast<int>(rng() % 12);
        hits += std::lround(melody_accuracy(x, target) * kFrames);
        frames += kFrames;
    }
    const double acc = static_cast<double>(hits) / frames;
    CHECK(acc > 1.0 / 12.0 - 0.04);
    CHECK(acc < 1.0 / 12.0 + 0.04);
}

TEST_CASE("self-similarity matrix structure") {
    // Time-constant input: every frame has the same profile -> all ones.
    std::mt19937_64 rng(4);
    Tensor profile = Tensor::randn({kBins, 1}, rng);
    Tensor x({kBins, kFrames});
    for (int b = 0; b < kBins; ++b)
        for (int f = 0; f < kFrames; ++f) x.at(b, f) = profile[b];
    Tensor ssm = eval_feature(ss_matrix, x);
    REQUIRE(ssm.rows() == kFrames);
    for (std::size_t i = 0; i < ssm.size(); ++i) CHECK(ssm[i] == doctest::Approx(1.0).epsilon(1e-9));

    // Two halves with zero-mean orthogonal profiles -> exact block structure
    // (the per-frame centering leaves zero-mean profiles untouched).
    Tensor y({kBins, kFrames});
    for (int f = 0; f < kFrames; ++f)
        for (int b = 0; b < kBins; ++b) {
            const bool first = f < kFrames / 2;
            if (first != (b < kBins / 2)) continue;
            y.at(b, f) = (first ? b : b - kBins / 2) < kBins / 4 ? 1.0 : -1.0;
        }
    Tensor blocks = eval_feature(ss_matrix, y);
    for (int i = 0; i < kFrames; ++i) {
        CHECK(blocks.at(i, i) == doctest::Approx(1.0).epsilon(1e-6));
        for (int j = 0; j < kFrames; ++j) {
            CHECK(blocks.at(i, j) == doctest::Approx(blocks.at(j, i)).epsilon(1e-12));
            if ((i < kFrames / 2) != (j < kFrames / 2))
                CHECK(std::abs(blocks.at(i, j)) < 1e-9);  // cross-block orthogonality
        }
    }

    CHECK(eval_scalar([&](ad::Tape& t, ad::Var v) { return structure_loss(t, v, blocks); }, y) <
          1e-18);
}

TEST_CASE("overlap loss mask semantics") {
    std::mt19937_64 rng(5);
    Tensor ref({kBins, kFrames});
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = unif(rng);

    MaskedReference in = make_inpaint_target(ref);
    MaskedReference out = make_outpaint_target(ref);
    for (std::size_t i = 0; i < in.mask_gen.size(); ++i) {
        CHECK((in.mask_gen[i] == 0.0 || in.mask_gen[i] == 1.0));
        CHECK(in.mask_gen[i] == in.mask_ref[i]);
        CHECK(out.mask_gen[i] == out.mask_ref[i]);
    }
    // Inpainting pins both ends, outpainting only the head.
    for (int b = 0; b < kBins; ++b)
        for (int f = 0; f < kFrames; ++f) {
            const bool head = f < kOverlapFrames, tail = f >= kFrames - kOverlapFrames;
            CHECK(in.mask_gen.at(b, f) == ((head || tail) ? 1.0 : 0.0));
            CHECK(out.mask_gen.at(b, f) == (head ? 1.0 : 0.0));
        }

    auto loss_on = [&](const MaskedReference& m, const Tensor& x) {
        return eval_scalar([&](ad::Tape& t, ad::Var v) { return overlap_loss(t, v, m); }, x);
    };
    CHECK(loss_on(in, ref) == 0.0);
    CHECK(loss_on(out, ref) == 0.0);

    // Changes outside the overlap are free.
    Tensor middle = ref;
    for (int b = 0; b < kBins; ++b)
        for (int f = kOverlapFrames; f < kFrames - kOverlapFrames; ++f) middle.at(b, f) += 5.0;
    CHECK(loss_on(in, middle) == 0.0);

    // A unit difference on exactly n masked cells costs n.
    Tensor bumped = ref;
    const int n = 7;
    for (int i = 0; i < n; ++i) bumped.at(i % kBins, i % kOverlapFrames) += 1.0;
    CHECK(loss_on(out, bumped) == doctest::Approx(n).epsilon(1e-12));
}

TEST_CASE("embedding similarity loss endpoints") {
    std::mt19937_64 rng(6);
    ToyEmbedder embedder;
    Tensor x = Tensor::randn({kBins, kFrames}, rng);
    Tensor e = embedder.embed_value(x);
    double norm = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) norm += e[i] * e[i];
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));

    auto loss_with = [&](const Tensor& target) {
        ad::Tape tape;
        Tensor flat({1, kDataDim});
        std::copy(x.data(), x.data() + kDataDim, flat.data());
        return tape.value(
            embed_similarity_loss(tape, embedder, tape.leaf(flat, false), target))[0];
    };
    CHECK(loss_with(e) == doctest::Approx(0.0).epsilon(1e-12));

    Tensor anti = e;
    for (std::size_t i = 0; i < anti.size(); ++i) anti[i] = -anti[i];
    CHECK(loss_with(anti) == doctest::Approx(2.0).epsilon(1e-12));

    // Gram-Schmidt an orthogonal unit target out of a second embedding.
    Tensor e2 = embedder.embed_value(Tensor::randn({kBins, kFrames}, rng));
    double dot = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) dot += e[i] * e2[i];
    Tensor ortho = e2;
    double on = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        ortho[i] -= dot * e[i];
        on += ortho[i] * ortho[i];
    }
    for (std::size_t i = 0; i < e.size(); ++i) ortho[i] /= std::sqrt(on);
    CHECK(loss_with(ortho) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("target validation catches malformed targets") {
    ControlTarget t;
    t.task = Task::Melody;
    t.melody.assign(kFrames, 13);
    CHECK_THROWS(t.validate());
    t.melody.assign(kFrames, 0);
    CHECK_THROWS(t.validate());
    t.melody.assign(kFrames, 5);
    CHECK_NOTHROW(t.validate());

    ControlTarget s;
    s.task = Task::Structure;
    s.ss_matrix = Tensor({kFrames, kFrames});
    for (int i = 0; i < kFrames; ++i) s.ss_matrix.at(i, i) = 1.0;
    s.ss_matrix.at(0, 1) = 0.5;  // asymmetric
    CHECK_THROWS(s.validate());
    s.ss_matrix.at(1, 0) = 0.5;
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("every control loss gradient passes finite differences") {
    std::mt19937_64 rng(7);
    ToyEmbedder embedder;
    Tensor point = Tensor::randn({1, kDataDim}, rng, 0.4);
    for (std::size_t i = 0; i < point.size(); ++i) point[i] = std::abs(point[i]) + 0.05;

    Tensor as_grid({kBins, kFrames});
    std::copy(point.data(), point.data() + kDataDim, as_grid.data());

    std::vector<ControlTarget> targets;
    {
        ControlTarget t;
        t.task = Task::Intensity;
        t.intensity_curve = Tensor({1, kFrames});
        for (int i = 0; i < kFrames; ++i) t.intensity_curve[i] = -10.0 + 0.2 * i;
        targets.push_back(t);
    }
    {
        ControlTarget t;
        t.task = Task::Melody;
        t.melody.assign(kFrames, 0);
        for (int i = 0; i < kFrames; ++i) t.melody[i] = 1 + (i % 12);
        targets.push_back(t);
    }
    {
        ControlTarget t;
        t.task = Task::Structure;
        ad::Tape tape;
        t.ss_matrix = tape.value(ss_matrix(tape, tape.leaf(Tensor::randn({kBins, kFrames}, rng), false)));
        targets.push_back(t);
    }
    {
        ControlTarget t;
        t.task = Task::Inpaint;
        t.masked = make_inpaint_target(as_grid);
        targets.push_back(t);
    }
    {
        ControlTarget t;
        t.task = Task::Outpaint;
        t.masked = make_outpaint_target(as_grid);
        targets.push_back(t);
    }
    {
        ControlTarget t;
        t.task = Task::Embed;
        t.embed = embedder.embed_value(Tensor::randn({kBins, kFrames}, rng));
        targets.push_back(t);
    }

    for (const auto& target : targets) {
        target.validate();
        auto f = [&](ad::Tape& tape, ad::Var v) { return control_loss(tape, v, target, embedder); };
        CHECK(ad::finite_diff_check(f, point, 1e-5) < 1e-3);
        CHECK(eval_scalar(f, point) >= 0.0);
    }
}
