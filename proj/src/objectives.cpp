#include "corefbench/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace corefbench {

std::string objective_name(Objective objective) {
    switch (objective) {
        case Objective::wg_sr: return "wg-sr";
        case Objective::bwp: return "bwp";
        case Objective::css: return "css";
        case Objective::mas: return "mas";
    }
    return "?";
}

Objective objective_from_string(const std::string& name) {
    if (name == "wg-sr" || name == "wgsr") return Objective::wg_sr;
    if (name == "bwp") return Objective::bwp;
    if (name == "css") return Objective::css;
    if (name == "mas") return Objective::mas;
    throw std::invalid_argument("unknown objective \"" + name +
                                "\" (expected wg-sr, bwp, css, or mas)");
}

std::vector<Objective> all_objectives() {
    return {Objective::wg_sr, Objective::bwp, Objective::css, Objective::mas};
}

// Head initialization keeps every objective at exactly (0.5, 0.5) before any
// update: the layer that feeds the pair of scores starts at zero while the
// readout vector carries unit scale, so score gradients stay well-sized at
// desk dimensions.
WgsrHead WgsrHead::init(std::size_t d, std::mt19937_64& rng) {
    WgsrHead head;
    head.w1 = zeros({d, d}, true);
    head.b1 = zeros({d}, true);
    head.w2 = randn({d}, rng, 1.0, true);
    head.b2 = zeros({1}, true);
    return head;
}

std::vector<std::pair<std::string, TensorPtr>> WgsrHead::named_parameters() const {
    return {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
}

WgsrHead WgsrHead::clone() const {
    WgsrHead c;
    c.w1 = make_tensor(w1->shape, w1->values, true);
    c.b1 = make_tensor(b1->shape, b1->values, true);
    c.w2 = make_tensor(w2->shape, w2->values, true);
    c.b2 = make_tensor(b2->shape, b2->values, true);
    return c;
}

CssHead CssHead::init(std::size_t d, std::mt19937_64& rng) {
    CssHead head;
    head.v = randn({d}, rng, 1.0, true);
    head.w = zeros({d, d}, true);
    head.u = zeros({d, d}, true);
    return head;
}

std::vector<std::pair<std::string, TensorPtr>> CssHead::named_parameters() const {
    return {{"v", v}, {"w", w}, {"u", u}};
}

CssHead CssHead::clone() const {
    CssHead c;
    c.v = make_tensor(v->shape, v->values, true);
    c.w = make_tensor(w->shape, w->values, true);
    c.u = make_tensor(u->shape, u->values, true);
    return c;
}

MasHead MasHead::init(std::size_t num_layers, std::size_t num_heads, std::mt19937_64& rng) {
    MasHead head;
    head.input_dim = 2 * num_layers * num_heads;
    const std::size_t n = head.input_dim;
    const double bound = std::sqrt(6.0 / static_cast<double>(2 * n));  // Xavier-uniform
    head.w1 = rand_uniform({n, n}, rng, -bound, bound, true);
    head.b1 = zeros({n}, true);
    head.w2 = rand_uniform({n, n}, rng, -bound, bound, true);
    head.b2 = zeros({n}, true);
    head.w3 = zeros({2, n}, true);
    head.b3 = zeros({2}, true);
    return head;
}

std::vector<std::pair<std::string, TensorPtr>> MasHead::named_parameters() const {
    return {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}, {"w3", w3}, {"b3", b3}};
}

MasHead MasHead::clone() const {
    MasHead c;
    c.input_dim = input_dim;
    c.w1 = make_tensor(w1->shape, w1->values, true);
    c.b1 = make_tensor(b1->shape, b1->values, true);
    c.w2 = make_tensor(w2->shape, w2->values, true);
    c.b2 = make_tensor(b2->shape, b2->values, true);
    c.w3 = make_tensor(w3->shape, w3->values, true);
    c.b3 = make_tensor(b3->shape, b3->values, true);
    return c;
}

namespace {

TensorPtr dot(const TensorPtr& a, const TensorPtr& b) { return sum_all(mul(a, b)); }

TensorPtr wgsr_score(const TensorPtr& first_token_embedding, const WgsrHead& head) {
    TensorPtr hidden = tanh_op(add(matmul(head.w1, first_token_embedding), head.b1));
    return add(dot(head.w2, hidden), head.b2);
}

}  // namespace

HeadOutput wgsr_forward(const SrInputPair& pair, const EncoderParams& encoder,
                        const WgsrHead& head, const EncodeOptions& opts) {
    EncoderOutput out1 = encode(pair.seq1, encoder, opts);
    EncoderOutput out2 = encode(pair.seq2, encoder, opts);
    TensorPtr s1 = wgsr_score(row(out1.embeddings, 0), head);
    TensorPtr s2 = wgsr_score(row(out2.embeddings, 0), head);
    return {softmax(stack_scalars({s1, s2}))};
}

TensorPtr bwp_score_pair(const TensorPtr& vocab_log_probs,
                         const std::vector<std::size_t>& c1_ids,
                         const std::vector<std::size_t>& c2_ids) {
    if (c1_ids.empty() || c2_ids.empty()) {
        throw std::invalid_argument("bwp: empty candidate token list");
    }
    TensorPtr lp1 = mean_all(gather(vocab_log_probs, c1_ids));
    TensorPtr lp2 = mean_all(gather(vocab_log_probs, c2_ids));
    return softmax(stack_scalars({lp1, lp2}));
}

HeadOutput bwp_forward(const MaskedInput& input, const EncoderParams& encoder,
                       const EncodeOptions& opts) {
    EncoderOutput out = encode(input.ids, encoder, opts);
    if (!out.mask_position) {
        throw std::invalid_argument("bwp: input has no <mask> token");
    }
    return {bwp_score_pair(out.vocab_log_probs, input.c1_ids, input.c2_ids)};
}

TensorPtr css_similarity(const TensorPtr& x, const TensorPtr& y, const CssHead& head) {
    return dot(head.v, tanh_op(add(matmul(head.w, x), matmul(head.u, y))));
}

namespace {

const TensorPtr& similarity_embeddings(const EncoderOutput& out, const EncoderParams& encoder) {
    const int layer = encoder.config.similarity_layer;
    if (layer < 0) return out.embeddings;
    return out.layer_embeddings.at(static_cast<std::size_t>(layer));
}

TensorPtr span_mean(const TensorPtr& embeddings, const CandidateSpan& span) {
    return mean_axis0(slice_rows(embeddings, span.start, span.length()));
}

const CandidateSpan& require_span(const std::optional<CandidateSpan>& span,
                                  const MaskedInput& input, const char* which) {
    if (!span) {
        throw NotFoundError("instance " + input.instance_id + ": " + which +
                            " span is not localized");
    }
    return *span;
}

}  // namespace

HeadOutput css_forward(const MaskedInput& input, const EncoderParams& encoder,
                       const CssHead& head, const EncodeOptions& opts) {
    const CandidateSpan& span1 = require_span(input.c1_span, input, "candidate1");
    const CandidateSpan& span2 = require_span(input.c2_span, input, "candidate2");
    EncoderOutput out = encode(input.ids, encoder, opts);
    const TensorPtr& emb = similarity_embeddings(out, encoder);
    TensorPtr mask_emb = row(emb, input.mask_position);
    TensorPtr s1 = css_similarity(span_mean(emb, span1), mask_emb, head);
    TensorPtr s2 = css_similarity(span_mean(emb, span2), mask_emb, head);
    return {softmax(stack_scalars({s1, s2}))};
}

std::pair<TensorPtr, TensorPtr> max_mask(const TensorPtr& a1, const TensorPtr& a2) {
    if (a1->shape != a2->shape) {
        throw ShapeError("max_mask: shape " + shape_str(a1->shape) + " vs " +
                         shape_str(a2->shape));
    }
    std::vector<double> m1(a1->size()), m2(a1->size());
    for (std::size_t i = 0; i < a1->size(); ++i) {
        m1[i] = a1->values[i] >= a2->values[i] ? 1.0 : 0.0;
        m2[i] = a2->values[i] >= a1->values[i] ? 1.0 : 0.0;
    }
    return {make_tensor(a1->shape, std::move(m1)), make_tensor(a1->shape, std::move(m2))};
}

TensorPtr mas_attention_features(const EncoderOutput& out, const CandidateSpan& span,
                                 std::size_t mask_position) {
    std::vector<std::size_t> span_cols(span.length());
    for (std::size_t k = 0; k < span_cols.size(); ++k) span_cols[k] = span.start + k;
    std::vector<TensorPtr> entries;
    for (const auto& layer : out.attentions) {
        for (const auto& att : layer) {
            TensorPtr from_mask = row(att, mask_position);
            entries.push_back(mean_all(gather(from_mask, span_cols)));
        }
    }
    return stack_scalars(entries);
}

HeadOutput mas_forward(const MaskedInput& input, const EncoderParams& encoder,
                       const MasHead& head, const EncodeOptions& opts) {
    const CandidateSpan& span1 = require_span(input.c1_span, input, "candidate1");
    const CandidateSpan& span2 = require_span(input.c2_span, input, "candidate2");
    EncoderOutput out = encode(input.ids, encoder, opts);
    if (!out.mask_position) {
        throw std::invalid_argument("mas: input has no <mask> token");
    }
    TensorPtr a1 = mas_attention_features(out, span1, *out.mask_position);
    TensorPtr a2 = mas_attention_features(out, span2, *out.mask_position);
    auto [m1, m2] = max_mask(a1, a2);
    TensorPtr masked = concat(mul(a1, m1), mul(a2, m2));
    TensorPtr h1 = tanh_op(add(matmul(head.w1, masked), head.b1));
    TensorPtr h2 = tanh_op(add(matmul(head.w2, h1), head.b2));
    TensorPtr logits = add(matmul(head.w3, h2), head.b3);
    return {softmax(logits)};
}

TensorPtr objective_loss(const HeadOutput& output, int label) {
    return bce_pair_loss(output.probs, label);
}

Prediction predict(const ProbPair& probs) {
    Prediction p;
    if (probs.p1 == probs.p2) {
        p.index = 0;
        p.tie = true;
    } else {
        p.index = probs.p1 >= probs.p2 ? 0 : 1;
    }
    return p;
}

}  // namespace corefbench
