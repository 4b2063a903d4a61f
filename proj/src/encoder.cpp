#include "corefbench/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace corefbench {

void EncoderConfig::validate() const {
    if (num_layers == 0 || num_heads == 0 || hidden_size == 0 || ffn_size == 0 ||
        max_seq_len == 0) {
        throw std::invalid_argument("encoder config: all sizes must be positive");
    }
    if (hidden_size % num_heads != 0) {
        throw std::invalid_argument("encoder config: hidden_size " +
                                    std::to_string(hidden_size) + " not divisible by " +
                                    std::to_string(num_heads) + " heads");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw std::invalid_argument("encoder config: dropout must be in [0,1)");
    }
    if (similarity_layer >= 0 && static_cast<std::size_t>(similarity_layer) >= num_layers) {
        throw std::invalid_argument("encoder config: similarity_layer out of range");
    }
}

namespace {

constexpr double kInitStd = 0.02;

TensorPtr weight(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    return randn({rows, cols}, rng, kInitStd, true);
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, std::mt19937_64& rng) {
    config.validate();
    if (config.vocab_size == 0) {
        throw std::invalid_argument("encoder config: vocab_size must be set before init");
    }
    const std::size_t d = config.hidden_size;
    EncoderParams m;
    m.config = config;
    m.tok_emb = weight(config.vocab_size, d, rng);
    m.pos_emb = weight(config.max_seq_len, d, rng);
    m.emb_ln_gain = full({d}, 1.0, true);
    m.emb_ln_bias = zeros({d}, true);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        EncoderLayerParams layer;
        layer.wq = weight(d, d, rng);
        layer.bq = zeros({d}, true);
        layer.wk = weight(d, d, rng);
        layer.bk = zeros({d}, true);
        layer.wv = weight(d, d, rng);
        layer.bv = zeros({d}, true);
        layer.wo = weight(d, d, rng);
        layer.bo = zeros({d}, true);
        layer.ln1_gain = full({d}, 1.0, true);
        layer.ln1_bias = zeros({d}, true);
        layer.ffn_w1 = weight(d, config.ffn_size, rng);
        layer.ffn_b1 = zeros({config.ffn_size}, true);
        layer.ffn_w2 = weight(config.ffn_size, d, rng);
        layer.ffn_b2 = zeros({d}, true);
        layer.ln2_gain = full({d}, 1.0, true);
        layer.ln2_bias = zeros({d}, true);
        m.layers.push_back(std::move(layer));
    }
    m.lm_bias = zeros({config.vocab_size}, true);
    return m;
}

std::vector<TensorPtr> EncoderParams::parameters() const {
    std::vector<TensorPtr> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::vector<std::pair<std::string, TensorPtr>> EncoderParams::named_parameters() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    out.emplace_back("emb_ln_gain", emb_ln_gain);
    out.emplace_back("emb_ln_bias", emb_ln_bias);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& lay = layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        out.emplace_back(p + "wq", lay.wq);
        out.emplace_back(p + "bq", lay.bq);
        out.emplace_back(p + "wk", lay.wk);
        out.emplace_back(p + "bk", lay.bk);
        out.emplace_back(p + "wv", lay.wv);
        out.emplace_back(p + "bv", lay.bv);
        out.emplace_back(p + "wo", lay.wo);
        out.emplace_back(p + "bo", lay.bo);
        out.emplace_back(p + "ln1_gain", lay.ln1_gain);
        out.emplace_back(p + "ln1_bias", lay.ln1_bias);
        out.emplace_back(p + "ffn_w1", lay.ffn_w1);
        out.emplace_back(p + "ffn_b1", lay.ffn_b1);
        out.emplace_back(p + "ffn_w2", lay.ffn_w2);
        out.emplace_back(p + "ffn_b2", lay.ffn_b2);
        out.emplace_back(p + "ln2_gain", lay.ln2_gain);
        out.emplace_back(p + "ln2_bias", lay.ln2_bias);
    }
    out.emplace_back("lm_bias", lm_bias);
    return out;
}

namespace {

TensorPtr clone_tensor(const TensorPtr& t) {
    auto c = make_tensor(t->shape, t->values, t->requires_grad);
    return c;
}

}  // namespace

EncoderParams EncoderParams::clone() const {
    EncoderParams m;
    m.config = config;
    m.tok_emb = clone_tensor(tok_emb);
    m.pos_emb = clone_tensor(pos_emb);
    m.emb_ln_gain = clone_tensor(emb_ln_gain);
    m.emb_ln_bias = clone_tensor(emb_ln_bias);
    for (const auto& lay : layers) {
        EncoderLayerParams c;
        c.wq = clone_tensor(lay.wq);
        c.bq = clone_tensor(lay.bq);
        c.wk = clone_tensor(lay.wk);
        c.bk = clone_tensor(lay.bk);
        c.wv = clone_tensor(lay.wv);
        c.bv = clone_tensor(lay.bv);
        c.wo = clone_tensor(lay.wo);
        c.bo = clone_tensor(lay.bo);
        c.ln1_gain = clone_tensor(lay.ln1_gain);
        c.ln1_bias = clone_tensor(lay.ln1_bias);
        c.ffn_w1 = clone_tensor(lay.ffn_w1);
        c.ffn_b1 = clone_tensor(lay.ffn_b1);
        c.ffn_w2 = clone_tensor(lay.ffn_w2);
        c.ffn_b2 = clone_tensor(lay.ffn_b2);
        c.ln2_gain = clone_tensor(lay.ln2_gain);
        c.ln2_bias = clone_tensor(lay.ln2_bias);
        m.layers.push_back(std::move(c));
    }
    m.lm_bias = clone_tensor(lm_bias);
    return m;
}

namespace {

TensorPtr maybe_dropout(const TensorPtr& x, const EncoderConfig& cfg, const EncodeOptions& opts) {
    if (!opts.training || cfg.dropout <= 0.0) return x;
    if (opts.rng == nullptr) {
        throw std::invalid_argument("encode: training mode with dropout requires an rng");
    }
    return dropout(x, cfg.dropout, *opts.rng);
}

}  // namespace

TrunkOutput encode_trunk(const std::vector<std::size_t>& ids, const EncoderParams& model,
                         const EncodeOptions& opts) {
    const EncoderConfig& cfg = model.config;
    if (ids.empty()) throw std::invalid_argument("encode: empty input");
    if (ids.size() > cfg.max_seq_len) {
        throw std::invalid_argument("encode: input length " + std::to_string(ids.size()) +
                                    " exceeds max sequence length " +
                                    std::to_string(cfg.max_seq_len));
    }
    const std::size_t seq_len = ids.size();
    const std::size_t d = cfg.hidden_size;
    const std::size_t dh = cfg.head_dim();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<std::size_t> positions(seq_len);
    std::iota(positions.begin(), positions.end(), 0);

    TensorPtr x = add(embedding_rows(model.tok_emb, ids), embedding_rows(model.pos_emb, positions));
    x = layer_norm(x, model.emb_ln_gain, model.emb_ln_bias);
    x = maybe_dropout(x, cfg, opts);

    TrunkOutput out;
    for (const auto& layer : model.layers) {
        TensorPtr q = add_row(matmul(x, layer.wq), layer.bq);
        TensorPtr k = add_row(matmul(x, layer.wk), layer.bk);
        TensorPtr v = add_row(matmul(x, layer.wv), layer.bv);

        std::vector<TensorPtr> head_outputs;
        std::vector<TensorPtr> head_attentions;
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            TensorPtr qh = slice_cols(q, h * dh, dh);
            TensorPtr kh = slice_cols(k, h * dh, dh);
            TensorPtr vh = slice_cols(v, h * dh, dh);
            TensorPtr scores = scale(matmul(qh, transpose(kh)), att_scale);
            TensorPtr att = softmax(scores);  // post-softmax stack exposed to callers
            head_attentions.push_back(att);
            TensorPtr att_used = maybe_dropout(att, cfg, opts);
            head_outputs.push_back(matmul(att_used, vh));
        }
        out.attentions.push_back(std::move(head_attentions));

        TensorPtr attn_out = add_row(matmul(concat_cols(head_outputs), layer.wo), layer.bo);
        attn_out = maybe_dropout(attn_out, cfg, opts);
        x = layer_norm(add(x, attn_out), layer.ln1_gain, layer.ln1_bias);

        TensorPtr ffn = add_row(matmul(gelu(add_row(matmul(x, layer.ffn_w1), layer.ffn_b1)),
                                       layer.ffn_w2),
                                layer.ffn_b2);
        ffn = maybe_dropout(ffn, cfg, opts);
        x = layer_norm(add(x, ffn), layer.ln2_gain, layer.ln2_bias);
        out.layer_embeddings.push_back(x);
    }
    return out;
}

TensorPtr lm_log_probs_at(const TensorPtr& hidden, const std::vector<std::size_t>& positions,
                          const EncoderParams& model) {
    TensorPtr rows = embedding_rows(hidden, positions);                 // k x d
    TensorPtr logits = matmul(rows, transpose(model.tok_emb));          // k x V (tied)
    logits = add_row(logits, model.lm_bias);
    return log_softmax(logits);
}

EncoderOutput encode(const std::vector<std::size_t>& ids, const EncoderParams& model,
                     const EncodeOptions& opts) {
    std::optional<std::size_t> mask_position;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == Vocab::kMask) {
            if (mask_position.has_value()) {
                throw std::invalid_argument("encode: more than one <mask> in input");
            }
            mask_position = i;
        }
    }
    TrunkOutput trunk = encode_trunk(ids, model, opts);
    EncoderOutput out;
    out.layer_embeddings = std::move(trunk.layer_embeddings);
    out.embeddings = out.layer_embeddings.back();
    out.attentions = std::move(trunk.attentions);
    out.mask_position = mask_position;
    if (mask_position.has_value()) {
        TensorPtr lp = lm_log_probs_at(out.embeddings, {*mask_position}, model);
        out.vocab_log_probs = reshape(lp, {model.config.vocab_size});
    }
    return out;
}

namespace {

struct MaskedBatchItem {
    std::vector<std::size_t> ids;
    std::vector<std::size_t> masked_positions;
    std::vector<std::size_t> original_ids;
};

// Masks mask_rate of the non-special positions (at least one when possible).
MaskedBatchItem mask_sentence(const std::vector<std::size_t>& ids, double mask_rate,
                              std::mt19937_64& rng) {
    MaskedBatchItem item;
    item.ids = ids;
    std::vector<std::size_t> maskable;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= Vocab::kNumReserved) maskable.push_back(i);
    }
    if (maskable.empty()) return item;
    std::shuffle(maskable.begin(), maskable.end(), rng);
    std::size_t n_mask = static_cast<std::size_t>(
        std::floor(mask_rate * static_cast<double>(maskable.size())));
    n_mask = std::max<std::size_t>(n_mask, 1);
    for (std::size_t k = 0; k < n_mask; ++k) {
        const std::size_t pos = maskable[k];
        item.masked_positions.push_back(pos);
        item.original_ids.push_back(ids[pos]);
        item.ids[pos] = Vocab::kMask;
    }
    return item;
}

}  // namespace

MlmStats pretrain_mlm(EncoderParams& model, const std::vector<std::string>& corpus,
                      const Vocab& vocab, const MlmOptions& opts) {
    MlmStats stats;
    if (opts.steps == 0) return stats;
    if (corpus.empty()) throw std::invalid_argument("pretrain_mlm: empty corpus");

    std::mt19937_64 rng(opts.seed);
    std::vector<std::vector<std::size_t>> tokenized;
    tokenized.reserve(corpus.size());
    for (const auto& text : corpus) tokenized.push_back(tokenize(text, vocab));

    AdamW optimizer(model.parameters(), opts.adamw);
    LrSchedule schedule = LrSchedule::linear_warmup_decay(opts.lr, opts.steps);
    std::uniform_int_distribution<std::size_t> pick(0, tokenized.size() - 1);
    const std::size_t vocab_size = model.config.vocab_size;

    for (std::size_t step = 0; step < opts.steps; ++step) {
        optimizer.zero_grad();
        std::vector<TensorPtr> losses;
        for (std::size_t b = 0; b < opts.batch_size; ++b) {
            MaskedBatchItem item = mask_sentence(tokenized[pick(rng)], opts.mask_rate, rng);
            if (item.masked_positions.empty()) continue;
            EncodeOptions eopts{.training = true, .rng = &rng};
            TrunkOutput trunk = encode_trunk(item.ids, model, eopts);
            TensorPtr log_probs =
                lm_log_probs_at(trunk.layer_embeddings.back(), item.masked_positions, model);
            // negative log-likelihood of the original tokens
            std::vector<std::size_t> flat_targets;
            for (std::size_t k = 0; k < item.original_ids.size(); ++k) {
                flat_targets.push_back(k * vocab_size + item.original_ids[k]);
            }
            TensorPtr picked = gather(reshape(log_probs, {log_probs->size()}), flat_targets);
            losses.push_back(scale(mean_all(picked), -1.0));
        }
        if (losses.empty()) continue;
        TensorPtr loss = mean_of(losses);
        if (!std::isfinite(loss->scalar())) {
            throw std::runtime_error("pretrain_mlm: non-finite loss at step " +
                                     std::to_string(step));
        }
        stats.step_losses.push_back(loss->scalar());
        backward(loss);
        optimizer.step(schedule.lr_at(step));
    }

    const std::size_t window = std::min<std::size_t>(100, stats.step_losses.size());
    if (window > 0) {
        double first = 0.0, last = 0.0;
        for (std::size_t i = 0; i < window; ++i) first += stats.step_losses[i];
        for (std::size_t i = stats.step_losses.size() - window; i < stats.step_losses.size(); ++i)
            last += stats.step_losses[i];
        stats.first_window_mean = first / static_cast<double>(window);
        stats.last_window_mean = last / static_cast<double>(window);
    }
    return stats;
}

double mlm_masked_accuracy(const EncoderParams& model, const std::vector<std::string>& texts,
                           const Vocab& vocab, double mask_rate, std::uint64_t seed) {
    NoGradGuard no_grad;
    std::mt19937_64 rng(seed);
    std::size_t correct = 0, total = 0;
    for (const auto& text : texts) {
        MaskedBatchItem item = mask_sentence(tokenize(text, vocab), mask_rate, rng);
        if (item.masked_positions.empty()) continue;
        TrunkOutput trunk = encode_trunk(item.ids, model, {});
        TensorPtr log_probs = lm_log_probs_at(trunk.layer_embeddings.back(),
                                              item.masked_positions, model);
        const std::size_t v = model.config.vocab_size;
        for (std::size_t k = 0; k < item.masked_positions.size(); ++k) {
            const double* rowp = log_probs->values.data() + k * v;
            std::size_t argmax = 0;
            for (std::size_t j = 1; j < v; ++j) {
                if (rowp[j] > rowp[argmax]) argmax = j;
            }
            correct += (argmax == item.original_ids[k]) ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace corefbench
