#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "corefbench/optim.hpp"
#include "corefbench/tensor.hpp"

using namespace corefbench;

namespace {

TensorPtr vec(std::vector<double> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return make_tensor({n}, std::move(values), requires_grad);
}

// independent oracle: subtract the max, then direct exp / normalize
std::vector<double> softmax_oracle(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    std::vector<double> out(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace

TEST_CASE("softmax values") {
    auto s = softmax(vec({0.0, 0.0}));
    CHECK(s->values[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s->values[1] == doctest::Approx(0.5).epsilon(1e-12));

    auto s2 = softmax(vec({std::log(3.0), 0.0}));
    CHECK(s2->values[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(s2->values[1] == doctest::Approx(0.25).epsilon(1e-12));

    // large logits stay finite; frozen against the subtract-max oracle
    const std::vector<double> big{1000.0, 998.0};
    auto s3 = softmax(vec(big));
    const auto expect = softmax_oracle(big);
    CHECK(std::abs(s3->values[0] - 0.880797) < 1e-6);
    CHECK(std::abs(s3->values[1] - 0.119203) < 1e-6);
    CHECK(s3->values[0] == doctest::Approx(expect[0]).epsilon(1e-14));
    CHECK(std::isfinite(s3->values[0]));
}

TEST_CASE("softmax properties: normalization and shift invariance") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-30.0, 30.0);
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = dim(rng);
        std::vector<double> x(n);
        for (double& v : x) v = dist(rng);
        const double c = dist(rng);
        auto s = softmax(vec(x));
        double sum = 0.0;
        for (double v : s->values) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-12);

        std::vector<double> shifted = x;
        for (double& v : shifted) v += c;
        auto s2 = softmax(vec(shifted));
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(s->values[i] - s2->values[i]) < 1e-12);
        }
    }
}

TEST_CASE("log_softmax normalizes") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> dist(-50.0, 50.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(6);
        for (double& v : x) v = dist(rng);
        auto ls = log_softmax(vec(x));
        double mx = ls->values[0];
        for (double v : ls->values) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : ls->values) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        CHECK(std::abs(lse) < 1e-9);
    }
}

TEST_CASE("shape errors name the op and shapes") {
    auto a = make_tensor({2, 3}, std::vector<double>(6, 1.0));
    auto b = make_tensor({4, 5}, std::vector<double>(20, 1.0));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), ShapeError);
    try {
        add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2,3)") != std::string::npos);
        CHECK(msg.find("(4,5)") != std::string::npos);
    }
    CHECK_THROWS_AS(mul(a, b), ShapeError);
}

TEST_CASE("bce_pair_loss values") {
    auto loss = bce_pair_loss(vec({0.5, 0.5}), 0);
    CHECK(loss->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // clamped perfect prediction
    auto clamped = bce_pair_loss(vec({1.0, 0.0}), 0);
    CHECK(clamped->scalar() > 0.0);
    CHECK(std::abs(clamped->scalar() - 1e-12) < 1e-14);

    auto loss2 = bce_pair_loss(vec({0.25, 0.75}), 1);
    CHECK(loss2->scalar() == doctest::Approx(-std::log(0.75)).epsilon(1e-12));

    CHECK_THROWS_AS(bce_pair_loss(vec({0.5, 0.5}), 2), std::invalid_argument);
    CHECK_THROWS_AS(bce_pair_loss(vec({0.6, 0.5}), 0), std::invalid_argument);
}

TEST_CASE("backward: sum gives all-ones") {
    auto x = make_tensor({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    auto loss = sum_all(x);
    backward(loss);
    for (double g : x->grad) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward: bce of softmax at equal logits") {
    auto logits = vec({0.0, 0.0}, true);
    auto loss = bce_pair_loss(softmax(logits), 0);
    backward(loss);
    CHECK(logits->grad[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(logits->grad[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("backward: gradient accumulates across reuse") {
    auto x = scalar_tensor(3.0, true);
    auto loss = mul(x, x);
    backward(loss);
    CHECK(x->grad[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = vec({1.0, 2.0}, true);
    auto y = scale(x, 2.0);
    CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("gather accumulates duplicate indices") {
    auto x = vec({1.0, 2.0, 3.0}, true);
    auto picked = gather(x, {0, 0, 2});
    backward(sum_all(picked));
    CHECK(x->grad[0] == doctest::Approx(2.0));
    CHECK(x->grad[1] == doctest::Approx(0.0));
    CHECK(x->grad[2] == doctest::Approx(1.0));
}

TEST_CASE("mean_axis0 and concat forward values") {
    auto m = make_tensor({2, 2}, {1, 2, 3, 4});
    auto mean = mean_axis0(m);
    CHECK(mean->values[0] == doctest::Approx(2.0));
    CHECK(mean->values[1] == doctest::Approx(3.0));

    auto c = concat(vec({1, 2}), vec({3}));
    CHECK(c->shape == std::vector<std::size_t>{3});
    CHECK(c->values[2] == doctest::Approx(3.0));
}

TEST_CASE("adamw: zero grad and zero decay is the identity") {
    auto p = vec({1.0, -2.0, 0.5}, true);
    AdamW opt({p}, {.weight_decay = 0.0});
    for (int i = 0; i < 5; ++i) opt.step(0.1);
    CHECK(p->values[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p->values[1] == doctest::Approx(-2.0).epsilon(1e-15));
    CHECK(p->values[2] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(opt.step_count() == 5);
}

TEST_CASE("adamw: decoupled weight decay") {
    auto p = vec({1.0}, true);
    AdamW opt({p}, {.weight_decay = 0.01});
    opt.step(0.1);
    CHECK(p->values[0] == doctest::Approx(0.999).epsilon(1e-12));
}

TEST_CASE("adamw: first step matches the hand computation") {
    auto p = vec({0.0}, true);
    p->ensure_grad();
    p->grad[0] = 1.0;
    AdamWConfig cfg{.beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8, .weight_decay = 0.0};
    AdamW opt({p}, cfg);
    opt.step(1e-3);
    // m_hat = 1, v_hat = 1, delta = -lr * m_hat / (sqrt(v_hat) + eps)
    const double expected = -1e-3 / (1.0 + 1e-8);
    CHECK(p->values[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("lr schedule values and endpoints") {
    auto s = LrSchedule::linear_warmup_decay(1e-5, 100);
    CHECK(s.warmup_steps == 10);
    CHECK(s.lr_at(0) == 0.0);
    CHECK(s.lr_at(10) == doctest::Approx(1e-5).epsilon(1e-15));
    CHECK(s.lr_at(100) == 0.0);
    CHECK(s.lr_at(55) == doctest::Approx(5e-6).epsilon(1e-12));
    CHECK_THROWS_AS(s.lr_at(101), std::out_of_range);
}

TEST_CASE("lr schedule is continuous") {
    for (auto [base, total] : std::vector<std::pair<double, std::size_t>>{
             {1e-5, 100}, {3e-4, 37}, {2e-3, 1000}}) {
        auto s = LrSchedule::linear_warmup_decay(base, total);
        const double bound =
            base / static_cast<double>(std::min(s.warmup_steps, total - s.warmup_steps)) + 1e-15;
        for (std::size_t step = 0; step < total; ++step) {
            CHECK(std::abs(s.lr_at(step) - s.lr_at(step + 1)) <= bound);
        }
    }
}

TEST_CASE("finite_diff_check: quadratic") {
    auto x = scalar_tensor(3.0, true);
    auto report = finite_diff_check([&]() { return mul(x, x); }, {x}, 1e-5);
    CHECK(report.max_rel_error < 1e-8);
    CHECK(report.coords_checked == 1);
}

TEST_CASE("finite_diff_check: linear-softmax-bce chain") {
    std::mt19937_64 rng(5);
    auto w = randn({2, 4}, rng, 0.7, true);
    auto b = randn({2}, rng, 0.3, true);
    auto input = randn({4}, rng, 1.0, false);
    auto make_loss = [&]() { return bce_pair_loss(softmax(add(matmul(w, input), b)), 0); };
    auto report = finite_diff_check(make_loss, {w, b}, 1e-5);
    CHECK(report.max_rel_error < 1e-6);
    CHECK(report.coords_checked == 10);
}

TEST_CASE("finite_diff_check flags a corrupted gradient") {
    auto x = scalar_tensor(3.0, true);
    auto make_loss = [&]() { return mul(x, x); };
    x->zero_grad();
    backward(make_loss());
    std::vector<std::vector<double>> corrupted{{x->grad[0] * 2.0}};
    auto report = finite_diff_check_against([&]() { return make_loss()->scalar(); }, {x},
                                            corrupted, 1e-5);
    CHECK(report.max_rel_error == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("no-grad mode skips graph recording") {
    auto x = vec({1.0, 2.0}, true);
    {
        NoGradGuard guard;
        auto y = scale(x, 2.0);
        CHECK_FALSE(y->requires_grad);
        CHECK(y->parents.empty());
    }
    auto y = scale(x, 2.0);
    CHECK(y->requires_grad);
}

TEST_CASE("layer_norm gradients check out") {
    std::mt19937_64 rng(9);
    auto x = randn({3, 5}, rng, 1.0, true);
    auto gain = randn({5}, rng, 0.5, true);
    auto bias = randn({5}, rng, 0.5, true);
    auto make_loss = [&]() { return mean_all(mul(layer_norm(x, gain, bias), layer_norm(x, gain, bias))); };
    auto report = finite_diff_check(make_loss, {x, gain, bias}, 1e-5);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("gelu matches its derivative") {
    std::mt19937_64 rng(10);
    auto x = randn({7}, rng, 1.5, true);
    auto make_loss = [&]() { return sum_all(gelu(x)); };
    auto report = finite_diff_check(make_loss, {x}, 1e-5);
    CHECK(report.max_rel_error < 1e-8);
}
