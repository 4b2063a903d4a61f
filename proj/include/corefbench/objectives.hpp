#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "corefbench/encoder.hpp"
#include "corefbench/schema.hpp"
#include "corefbench/tensor.hpp"

namespace corefbench {

enum class Objective { wg_sr, bwp, css, mas };

std::string objective_name(Objective objective);
Objective objective_from_string(const std::string& name);
std::vector<Objective> all_objectives();

/// Candidate/sentence probability pair; sums to 1.
struct ProbPair {
    double p1 = 0.0;
    double p2 = 0.0;
};

/// Binary-softmax output of a head, kept as a graph tensor so the shared
/// cross-entropy loss backpropagates into the head and the encoder.
struct HeadOutput {
    TensorPtr probs;  // shape (2)
    ProbPair pair() const { return {probs->values[0], probs->values[1]}; }
};

/// Sequence-ranking head: one hidden layer matching the encoder width, tanh,
/// scalar output, applied to the first-token embedding of each sequence.
struct WgsrHead {
    TensorPtr w1, b1;  // d x d, d
    TensorPtr w2, b2;  // d, 1

    static WgsrHead init(std::size_t hidden_size, std::mt19937_64& rng);
    std::vector<TensorPtr> parameters() const { return {w1, b1, w2, b2}; }
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
    WgsrHead clone() const;
};

/// Additive-alignment similarity head: sim(x, y) = v' tanh(Wx + Uy).
struct CssHead {
    TensorPtr v;     // d
    TensorPtr w, u;  // d x d each

    static CssHead init(std::size_t hidden_size, std::mt19937_64& rng);
    std::vector<TensorPtr> parameters() const { return {v, w, u}; }
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
    CssHead clone() const;
};

/// Attention-score head: MLP over the concatenated max-masked attention
/// tensors (input 2*L*H), two hidden layers of the same size with tanh, two
/// output logits. The output layer starts at zero so training begins at
/// (0.5, 0.5).
struct MasHead {
    std::size_t input_dim = 0;  // 2 * L * H
    TensorPtr w1, b1, w2, b2;   // hidden layers
    TensorPtr w3, b3;           // 2 x input_dim, 2

    static MasHead init(std::size_t num_layers, std::size_t num_heads, std::mt19937_64& rng);
    std::vector<TensorPtr> parameters() const { return {w1, b1, w2, b2, w3, b3}; }
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
    MasHead clone() const;
};

// --- forwards ---------------------------------------------------------------

HeadOutput wgsr_forward(const SrInputPair& pair, const EncoderParams& encoder,
                        const WgsrHead& head, const EncodeOptions& opts = {});

/// Pairwise softmax over per-candidate log-probabilities, each the mean of
/// the vocabulary log-probs of the candidate's tokens at the mask position.
/// Equals (P1/(P1+P2), P2/(P1+P2)) for the underlying probabilities.
TensorPtr bwp_score_pair(const TensorPtr& vocab_log_probs,
                         const std::vector<std::size_t>& c1_ids,
                         const std::vector<std::size_t>& c2_ids);

HeadOutput bwp_forward(const MaskedInput& input, const EncoderParams& encoder,
                       const EncodeOptions& opts = {});

TensorPtr css_similarity(const TensorPtr& x, const TensorPtr& y, const CssHead& head);

HeadOutput css_forward(const MaskedInput& input, const EncoderParams& encoder,
                       const CssHead& head, const EncodeOptions& opts = {});

/// Elementwise comparison masks: M1(j) = 1 iff A1(j) >= A2(j), M2(j) = 1 iff
/// A2(j) >= A1(j); ties set both. The masks are constants (no gradient).
std::pair<TensorPtr, TensorPtr> max_mask(const TensorPtr& a1, const TensorPtr& a2);

/// Mean attention from the mask position to the span tokens, per layer and
/// head, as a flat L*H vector.
TensorPtr mas_attention_features(const EncoderOutput& out, const CandidateSpan& span,
                                 std::size_t mask_position);

HeadOutput mas_forward(const MaskedInput& input, const EncoderParams& encoder,
                       const MasHead& head, const EncodeOptions& opts = {});

/// Shared binary cross-entropy loss over a head's probability pair.
TensorPtr objective_loss(const HeadOutput& output, int label);

struct Prediction {
    int index = 0;  // chosen candidate/sentence, 0-based
    bool tie = false;
};

/// Argmax of the pair; exact ties go to index 0 and are flagged.
Prediction predict(const ProbPair& probs);

}  // namespace corefbench
