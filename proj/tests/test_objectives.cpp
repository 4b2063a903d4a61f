#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "corefbench/encoder.hpp"
#include "corefbench/objectives.hpp"
#include "corefbench/optim.hpp"
#include "corefbench/schema.hpp"

using namespace corefbench;

namespace {

TensorPtr vec(std::vector<double> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return make_tensor({n}, std::move(values), requires_grad);
}

struct Fixture {
    Vocab vocab;
    EncoderParams encoder;
    SchemaInstance instance;
    MaskedInput masked;
    SrInputPair sr;

    explicit Fixture(std::uint64_t seed = 17, std::size_t d = 16) {
        instance.id = "toy";
        instance.text = "the dog watched the door because the _ was hungry .";
        instance.candidate1 = "dog";
        instance.candidate2 = "door";
        instance.answer = 1;

        vocab = build_vocab({instance.text, "dog door"}, 1);
        EncoderConfig cfg;
        cfg.num_layers = 2;
        cfg.num_heads = 2;
        cfg.hidden_size = d;
        cfg.ffn_size = 2 * d;
        cfg.vocab_size = vocab.size();
        cfg.max_seq_len = 24;
        std::mt19937_64 rng(seed);
        encoder = EncoderParams::init(cfg, rng);
        masked = build_masked_input(instance, vocab);
        sr = build_sr_inputs(instance, vocab);
    }
};

std::vector<double> softmax2(double a, double b) {
    const double mx = std::max(a, b);
    const double ea = std::exp(a - mx), eb = std::exp(b - mx);
    return {ea / (ea + eb), eb / (ea + eb)};
}

}  // namespace

TEST_CASE("wgsr_forward: zero output layer gives an even pair") {
    Fixture f;
    std::mt19937_64 rng(3);
    WgsrHead head = WgsrHead::init(f.encoder.config.hidden_size, rng);
    std::fill(head.w2->values.begin(), head.w2->values.end(), 0.0);
    head.b2->values[0] = 0.0;
    HeadOutput out = wgsr_forward(f.sr, f.encoder, head);
    CHECK(out.pair().p1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.pair().p2 == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("wgsr_forward: identical sequences tie") {
    Fixture f;
    std::mt19937_64 rng(4);
    WgsrHead head = WgsrHead::init(f.encoder.config.hidden_size, rng);
    // make the head non-trivial
    for (auto& w : head.w1->values) w = 0.05;
    SrInputPair same = f.sr;
    same.seq2 = same.seq1;
    HeadOutput out = wgsr_forward(same, f.encoder, head);
    CHECK(out.pair().p1 == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("wgsr_forward matches a step-by-step recomputation") {
    Fixture f;
    std::mt19937_64 rng(5);
    WgsrHead head = WgsrHead::init(f.encoder.config.hidden_size, rng);
    for (auto& w : head.w1->values) w = 0.02 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);

    const std::size_t d = f.encoder.config.hidden_size;
    auto score = [&](const std::vector<std::size_t>& seq) {
        EncoderOutput enc = encode(seq, f.encoder);
        double s = head.b2->values[0];
        for (std::size_t i = 0; i < d; ++i) {
            double pre = head.b1->values[i];
            for (std::size_t j = 0; j < d; ++j) {
                pre += head.w1->values[i * d + j] * enc.embeddings->values[j];  // row 0
            }
            s += head.w2->values[i] * std::tanh(pre);
        }
        return s;
    };
    const auto expect = softmax2(score(f.sr.seq1), score(f.sr.seq2));
    HeadOutput out = wgsr_forward(f.sr, f.encoder, head);
    CHECK(out.pair().p1 == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(out.pair().p2 == doctest::Approx(expect[1]).epsilon(1e-12));
}

TEST_CASE("bwp_score_pair: hand oracle on controlled log-probs") {
    // ids: c1 -> {0, 1} with log-probs {-1, -3}; c2 -> {2} with -2
    auto lp = vec({-1.0, -3.0, -2.0, -7.0});
    auto probs = bwp_score_pair(lp, {0, 1}, {2});
    CHECK(probs->values[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(probs->values[1] == doctest::Approx(0.5).epsilon(1e-12));

    auto even = bwp_score_pair(vec({-1.0, -1.0}), {0}, {1});
    CHECK(even->values[0] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(bwp_score_pair(lp, {}, {1}), std::invalid_argument);
}

TEST_CASE("bwp_score_pair: shift invariance") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> dist(-4.0, 0.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> lp(8);
        for (double& x : lp) x = dist(rng);
        std::vector<double> shifted = lp;
        for (double& x : shifted) x += 5.0;
        auto p = bwp_score_pair(vec(lp), {0, 3}, {5});
        auto q = bwp_score_pair(vec(shifted), {0, 3}, {5});
        CHECK(std::abs(p->values[0] - q->values[0]) <= 1e-12);
        CHECK(std::abs(p->values[1] - q->values[1]) <= 1e-12);
    }
}

TEST_CASE("bwp_forward matches the mean-then-softmax recomputation") {
    Fixture f;
    HeadOutput out = bwp_forward(f.masked, f.encoder);
    EncoderOutput enc = encode(f.masked.ids, f.encoder);
    auto mean_lp = [&](const std::vector<std::size_t>& ids) {
        double s = 0.0;
        for (std::size_t id : ids) s += enc.vocab_log_probs->values[id];
        return s / static_cast<double>(ids.size());
    };
    const auto expect = softmax2(mean_lp(f.masked.c1_ids), mean_lp(f.masked.c2_ids));
    CHECK(out.pair().p1 == doctest::Approx(expect[0]).epsilon(1e-12));
}

TEST_CASE("bwp and css swap candidates exactly") {
    Fixture f;
    std::mt19937_64 rng(7);
    CssHead css = CssHead::init(f.encoder.config.hidden_size, rng);
    for (auto& w : css.w->values) w = 0.05 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);
    for (auto& u : css.u->values) u = 0.05 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);

    MaskedInput swapped = f.masked;
    std::swap(swapped.c1_ids, swapped.c2_ids);
    std::swap(swapped.c1_span, swapped.c2_span);

    HeadOutput b1 = bwp_forward(f.masked, f.encoder);
    HeadOutput b2 = bwp_forward(swapped, f.encoder);
    CHECK(b1.pair().p1 == b2.pair().p2);
    CHECK(b1.pair().p2 == b2.pair().p1);

    HeadOutput c1 = css_forward(f.masked, f.encoder, css);
    HeadOutput c2 = css_forward(swapped, f.encoder, css);
    CHECK(c1.pair().p1 == c2.pair().p2);
    CHECK(c1.pair().p2 == c2.pair().p1);
}

TEST_CASE("css_similarity closed-form cases") {
    auto v0 = CssHead{};
    v0.v = vec({0.0, 0.0}, true);
    v0.w = make_tensor({2, 2}, {1, 0, 0, 1}, true);
    v0.u = make_tensor({2, 2}, {0.3, 0.1, -0.2, 0.4}, true);
    auto x = vec({0.5, 9.0});
    auto y = vec({7.0, -3.0});
    CHECK(css_similarity(x, y, v0)->scalar() == doctest::Approx(0.0));

    CssHead zero_mats;
    zero_mats.v = vec({2.0, -1.0}, true);
    zero_mats.w = zeros({2, 2}, true);
    zero_mats.u = zeros({2, 2}, true);
    CHECK(css_similarity(x, y, zero_mats)->scalar() == doctest::Approx(0.0));

    CssHead identity;
    identity.v = vec({1.0, 0.0}, true);
    identity.w = make_tensor({2, 2}, {1, 0, 0, 1}, true);
    identity.u = zeros({2, 2}, true);
    CHECK(css_similarity(x, y, identity)->scalar() ==
          doctest::Approx(std::tanh(0.5)).epsilon(1e-12));
    CHECK(css_similarity(x, y, identity)->scalar() == doctest::Approx(0.462117).epsilon(1e-5));

    auto bad = vec({1.0, 2.0, 3.0});
    CHECK_THROWS_AS(css_similarity(bad, y, identity), ShapeError);
}

TEST_CASE("css_forward: zero v ties; identical spans tie") {
    Fixture f;
    std::mt19937_64 rng(8);
    CssHead head = CssHead::init(f.encoder.config.hidden_size, rng);
    std::fill(head.v->values.begin(), head.v->values.end(), 0.0);
    HeadOutput out = css_forward(f.masked, f.encoder, head);
    CHECK(out.pair().p1 == doctest::Approx(0.5).epsilon(1e-12));

    CssHead head2 = CssHead::init(f.encoder.config.hidden_size, rng);
    for (auto& w : head2.w->values) w = 0.03;
    MaskedInput same_spans = f.masked;
    same_spans.c2_span = same_spans.c1_span;
    HeadOutput out2 = css_forward(same_spans, f.encoder, head2);
    CHECK(out2.pair().p1 == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("css_forward matches the mean-embed/sim/softmax recomputation") {
    Fixture f;
    std::mt19937_64 rng(9);
    CssHead head = CssHead::init(f.encoder.config.hidden_size, rng);
    for (auto& w : head.w->values) w = 0.07 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);
    for (auto& u : head.u->values) u = 0.07 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);

    EncoderOutput enc = encode(f.masked.ids, f.encoder);
    const std::size_t d = f.encoder.config.hidden_size;
    auto mean_embed = [&](const CandidateSpan& span) {
        std::vector<double> m(d, 0.0);
        for (std::size_t t = span.start; t <= span.end; ++t)
            for (std::size_t j = 0; j < d; ++j) m[j] += enc.embeddings->values[t * d + j];
        for (double& x : m) x /= static_cast<double>(span.length());
        return m;
    };
    auto sim = [&](const std::vector<double>& x, const std::vector<double>& y) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double pre = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                pre += head.w->values[i * d + j] * x[j] + head.u->values[i * d + j] * y[j];
            }
            s += head.v->values[i] * std::tanh(pre);
        }
        return s;
    };
    std::vector<double> mask_emb(d);
    for (std::size_t j = 0; j < d; ++j)
        mask_emb[j] = enc.embeddings->values[f.masked.mask_position * d + j];
    const auto expect = softmax2(sim(mean_embed(*f.masked.c1_span), mask_emb),
                                 sim(mean_embed(*f.masked.c2_span), mask_emb));

    HeadOutput out = css_forward(f.masked, f.encoder, head);
    CHECK(out.pair().p1 == doctest::Approx(expect[0]).epsilon(1e-10));
    CHECK(out.pair().p2 == doctest::Approx(expect[1]).epsilon(1e-10));
}

TEST_CASE("max_mask definition and tie case") {
    auto a1 = vec({0.3, 0.1});
    auto a2 = vec({0.2, 0.5});
    auto [m1, m2] = max_mask(a1, a2);
    CHECK(m1->values == std::vector<double>{1.0, 0.0});
    CHECK(m2->values == std::vector<double>{0.0, 1.0});

    auto [t1, t2] = max_mask(a1, a1);
    CHECK(t1->values == std::vector<double>{1.0, 1.0});
    CHECK(t2->values == std::vector<double>{1.0, 1.0});

    CHECK_THROWS_AS(max_mask(a1, vec({1.0, 2.0, 3.0})), ShapeError);
}

TEST_CASE("max_mask properties over random pairs") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 4);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> a(8), b(8);
        for (std::size_t i = 0; i < 8; ++i) {
            a[i] = dist(rng);
            b[i] = coin(rng) == 0 ? a[i] : dist(rng);  // force some exact ties
        }
        auto [m1, m2] = max_mask(vec(a), vec(b));
        for (std::size_t i = 0; i < 8; ++i) {
            CHECK(m1->values[i] + m2->values[i] >= 1.0);
            const bool both = m1->values[i] == 1.0 && m2->values[i] == 1.0;
            CHECK(both == (a[i] == b[i]));
        }
        // strictly increasing transform keeps the masks
        auto f = [](double x) { return std::exp(3.0 * x) + x; };
        std::vector<double> fa(8), fb(8);
        for (std::size_t i = 0; i < 8; ++i) {
            fa[i] = f(a[i]);
            fb[i] = f(b[i]);
        }
        auto [n1, n2] = max_mask(vec(fa), vec(fb));
        CHECK(n1->values == m1->values);
        CHECK(n2->values == m2->values);
    }
}

TEST_CASE("mas_forward: zero output layer ties, including identical spans") {
    Fixture f;
    std::mt19937_64 rng(11);
    MasHead head = MasHead::init(f.encoder.config.num_layers, f.encoder.config.num_heads, rng);
    HeadOutput out = mas_forward(f.masked, f.encoder, head);
    CHECK(out.pair().p1 == doctest::Approx(0.5).epsilon(1e-12));

    MaskedInput same = f.masked;
    same.c2_span = same.c1_span;
    HeadOutput out2 = mas_forward(same, f.encoder, head);
    CHECK(out2.pair().p1 == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("mas_forward matches the A/M/B/MLP recomputation") {
    Fixture f;
    std::mt19937_64 rng(12);
    MasHead head = MasHead::init(f.encoder.config.num_layers, f.encoder.config.num_heads, rng);
    for (auto& w : head.w3->values) w = 0.4 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);

    EncoderOutput enc = encode(f.masked.ids, f.encoder);
    const std::size_t L = f.encoder.config.num_layers;
    const std::size_t H = f.encoder.config.num_heads;
    const std::size_t T = f.masked.ids.size();
    auto features = [&](const CandidateSpan& span) {
        std::vector<double> a;
        for (std::size_t l = 0; l < L; ++l) {
            for (std::size_t h = 0; h < H; ++h) {
                double s = 0.0;
                for (std::size_t t = span.start; t <= span.end; ++t) {
                    s += enc.attentions[l][h]->values[f.masked.mask_position * T + t];
                }
                a.push_back(s / static_cast<double>(span.length()));
            }
        }
        return a;
    };
    auto a1 = features(*f.masked.c1_span);
    auto a2 = features(*f.masked.c2_span);
    const std::size_t n = 2 * L * H;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n / 2; ++i) {
        x[i] = a1[i] >= a2[i] ? a1[i] : 0.0;
        x[n / 2 + i] = a2[i] >= a1[i] ? a2[i] : 0.0;
    }
    auto mlp_layer = [&](const TensorPtr& w, const TensorPtr& b,
                         const std::vector<double>& in, bool with_tanh) {
        const std::size_t rows = w->shape[0];
        std::vector<double> out(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            double pre = b->values[i];
            for (std::size_t j = 0; j < in.size(); ++j) pre += w->values[i * in.size() + j] * in[j];
            out[i] = with_tanh ? std::tanh(pre) : pre;
        }
        return out;
    };
    auto h1 = mlp_layer(head.w1, head.b1, x, true);
    auto h2 = mlp_layer(head.w2, head.b2, h1, true);
    auto logits = mlp_layer(head.w3, head.b3, h2, false);
    const auto expect = softmax2(logits[0], logits[1]);

    HeadOutput out = mas_forward(f.masked, f.encoder, head);
    CHECK(out.pair().p1 == doctest::Approx(expect[0]).epsilon(1e-10));
    CHECK(out.pair().p2 == doctest::Approx(expect[1]).epsilon(1e-10));
}

TEST_CASE("every head output is a valid probability pair") {
    std::mt19937_64 seed_rng(13);
    for (int trial = 0; trial < 25; ++trial) {
        Fixture f(seed_rng());
        std::mt19937_64 rng(seed_rng());
        WgsrHead wgsr = WgsrHead::init(f.encoder.config.hidden_size, rng);
        CssHead css = CssHead::init(f.encoder.config.hidden_size, rng);
        MasHead mas = MasHead::init(f.encoder.config.num_layers, f.encoder.config.num_heads, rng);
        for (auto head_out :
             {wgsr_forward(f.sr, f.encoder, wgsr), bwp_forward(f.masked, f.encoder),
              css_forward(f.masked, f.encoder, css), mas_forward(f.masked, f.encoder, mas)}) {
            const ProbPair p = head_out.pair();
            CHECK(std::abs(p.p1 + p.p2 - 1.0) < 1e-9);
            CHECK(p.p1 >= 0.0);
            CHECK(p.p2 >= 0.0);
        }
    }
}

TEST_CASE("objective_loss delegates to the pair loss") {
    auto probs = softmax(vec({0.0, 0.0}, true));
    HeadOutput out{probs};
    CHECK(objective_loss(out, 0)->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("predict") {
    CHECK(predict({0.7, 0.3}).index == 0);
    CHECK_FALSE(predict({0.7, 0.3}).tie);
    Prediction tie = predict({0.5, 0.5});
    CHECK(tie.index == 0);
    CHECK(tie.tie);

    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double a = dist(rng), b = dist(rng);
        auto p = softmax(vec({a, b}));
        const int direct = a == b ? 0 : (a > b ? 0 : 1);
        CHECK(predict({p->values[0], p->values[1]}).index == direct);
    }
}

TEST_CASE("head gradients pass the finite-difference check") {
    Fixture f(23, 8);
    std::mt19937_64 rng(15);

    WgsrHead wgsr = WgsrHead::init(f.encoder.config.hidden_size, rng);
    for (auto& w : wgsr.w1->values) w = 0.1 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);
    auto r1 = finite_diff_check(
        [&]() { return objective_loss(wgsr_forward(f.sr, f.encoder, wgsr), 0); },
        wgsr.parameters(), 1e-5);
    CHECK(r1.max_rel_error < 1e-4);

    CssHead css = CssHead::init(f.encoder.config.hidden_size, rng);
    for (auto& w : css.w->values) w = 0.1 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);
    for (auto& u : css.u->values) u = 0.1 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);
    auto r2 = finite_diff_check(
        [&]() { return objective_loss(css_forward(f.masked, f.encoder, css), 1); },
        css.parameters(), 1e-5);
    CHECK(r2.max_rel_error < 1e-4);

    MasHead mas = MasHead::init(f.encoder.config.num_layers, f.encoder.config.num_heads, rng);
    for (auto& w : mas.w3->values) w = 0.3 * (static_cast<double>(rng() % 100) / 50.0 - 1.0);
    auto r3 = finite_diff_check(
        [&]() { return objective_loss(mas_forward(f.masked, f.encoder, mas), 0); },
        mas.parameters(), 1e-5);
    CHECK(r3.max_rel_error < 1e-4);
}
