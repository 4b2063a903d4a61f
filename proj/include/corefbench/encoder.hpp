#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "corefbench/optim.hpp"
#include "corefbench/tensor.hpp"
#include "corefbench/vocab.hpp"

namespace corefbench {

struct EncoderConfig {
    std::size_t num_layers = 2;
    std::size_t num_heads = 2;
    std::size_t hidden_size = 64;
    std::size_t ffn_size = 128;
    std::size_t vocab_size = 0;
    std::size_t max_seq_len = 64;
    double dropout = 0.1;
    // Which layer's contextual embeddings the similarity head reads; -1 = final.
    int similarity_layer = -1;

    std::size_t head_dim() const { return hidden_size / num_heads; }
    void validate() const;
};

struct EncoderLayerParams {
    TensorPtr wq, bq, wk, bk, wv, bv, wo, bo;
    TensorPtr ln1_gain, ln1_bias;
    TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    TensorPtr ln2_gain, ln2_bias;
};

/// Masked-language-model transformer encoder parameters. The LM projection is
/// tied to the token embedding matrix, plus a per-token bias.
struct EncoderParams {
    EncoderConfig config;
    TensorPtr tok_emb;  // V x d
    TensorPtr pos_emb;  // max_seq_len x d
    TensorPtr emb_ln_gain, emb_ln_bias;
    std::vector<EncoderLayerParams> layers;
    TensorPtr lm_bias;  // V

    static EncoderParams init(const EncoderConfig& config, std::mt19937_64& rng);

    std::vector<TensorPtr> parameters() const;
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
    EncoderParams clone() const;
};

struct EncoderOutput {
    std::vector<TensorPtr> layer_embeddings;          // [L], each T x d
    TensorPtr embeddings;                             // final layer, T x d
    std::vector<std::vector<TensorPtr>> attentions;   // [L][H], each T x T, post-softmax
    std::optional<std::size_t> mask_position;
    TensorPtr vocab_log_probs;                        // V, present iff mask present
};

struct EncodeOptions {
    bool training = false;
    std::mt19937_64* rng = nullptr;  // required when training and dropout > 0
};

/// Full forward pass over one token sequence. Errors on over-length input or
/// more than one <mask>.
EncoderOutput encode(const std::vector<std::size_t>& ids, const EncoderParams& model,
                     const EncodeOptions& opts = {});

/// Hidden states and attention stack without the LM head; no restriction on
/// the number of masks.
struct TrunkOutput {
    std::vector<TensorPtr> layer_embeddings;
    std::vector<std::vector<TensorPtr>> attentions;
};
TrunkOutput encode_trunk(const std::vector<std::size_t>& ids, const EncoderParams& model,
                         const EncodeOptions& opts = {});

/// Vocabulary log-probabilities (log-softmax over the tied projection) at the
/// given positions of a final hidden-state matrix.
TensorPtr lm_log_probs_at(const TensorPtr& hidden, const std::vector<std::size_t>& positions,
                          const EncoderParams& model);

struct MlmOptions {
    std::size_t steps = 0;
    std::size_t batch_size = 16;
    double lr = 3e-4;
    double mask_rate = 0.15;
    std::uint64_t seed = 0;
    AdamWConfig adamw{.weight_decay = 0.01};
};

struct MlmStats {
    std::vector<double> step_losses;
    double first_window_mean = 0.0;  // mean loss over the first min(100, steps) steps
    double last_window_mean = 0.0;   // mean loss over the last min(100, steps) steps
};

/// Masked-token prediction training over plain texts: each step samples a
/// batch of sentences, masks mask_rate of their word positions (always with
/// <mask>), and minimizes the mean negative log-likelihood of the original
/// tokens. steps = 0 leaves the parameters untouched.
MlmStats pretrain_mlm(EncoderParams& model, const std::vector<std::string>& corpus,
                      const Vocab& vocab, const MlmOptions& opts);

/// Fraction of masked word positions whose argmax prediction recovers the
/// original token, over the given texts (eval mode, seeded masking).
double mlm_masked_accuracy(const EncoderParams& model, const std::vector<std::string>& texts,
                           const Vocab& vocab, double mask_rate, std::uint64_t seed);

}  // namespace corefbench
