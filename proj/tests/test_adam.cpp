#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ditto/adam.hpp"

using namespace ditto;

TEST_CASE("first step moves by ~lr in the gradient direction") {
    Tensor p = Tensor::scalar(0.0);
    Tensor g = Tensor::scalar(1.0);
    AdamState st(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    st.init({&p});
    adam_step({&p}, {&g}, st);
    // Bias correction makes mhat = g, vhat = g^2 on the first step, so the
    // update is lr * g / (|g| + eps).
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(st.step_count == 1);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    Tensor p({3}, {1.0, -2.0, 0.5});
    Tensor g({3}, 0.0);
    AdamState st;
    st.init({&p});
    adam_step({&p}, {&g}, st);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
    CHECK(p[2] == 0.5);
}

TEST_CASE("two identical steps: counter advances, second update shrinks") {
    Tensor p = Tensor::scalar(0.0);
    Tensor g = Tensor::scalar(1.0);
    AdamState st(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    st.init({&p});
    adam_step({&p}, {&g}, st);
    double first = -p[0];
    double before = p[0];
    adam_step({&p}, {&g}, st);
    double second = before - p[0];
    CHECK(st.step_count == 2);
    CHECK(second < st.cfg.lr);
    CHECK(second > 0.0);
    CHECK(first == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("shape mismatch is rejected") {
    Tensor p({3}, 0.0);
    Tensor g({2}, 0.0);
    AdamState st;
    st.init({&p});
    CHECK_THROWS_AS(adam_step({&p}, {&g}, st), std::invalid_argument);
}
