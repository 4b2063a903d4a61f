#pragma once

#include <map>
#include <string>
#include <vector>

#include "corefbench/encoder.hpp"
#include "corefbench/tensor.hpp"
#include "corefbench/vocab.hpp"

#include <nlohmann/json_fwd.hpp>

namespace corefbench {

/// Self-describing model container: a JSON header (config, vocab, tensor
/// index, free-form metadata) followed by raw little-endian float64 buffers.
/// Save/load round-trips values bit-exactly.
struct Checkpoint {
    EncoderConfig config;
    std::vector<std::string> vocab_tokens;
    std::map<std::string, TensorPtr> tensors;
    std::map<std::string, std::string> meta;

    void put_encoder(const EncoderParams& model);
    void put_named(const std::string& prefix,
                   const std::vector<std::pair<std::string, TensorPtr>>& named);
    EncoderParams take_encoder() const;
    Vocab take_vocab() const;
};

Checkpoint make_encoder_checkpoint(const EncoderParams& model, const Vocab& vocab);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// EncoderConfig <-> JSON (shared with run records and the CLI config file).
void config_to_json(const EncoderConfig& cfg, nlohmann::json& j);
EncoderConfig config_from_json(const nlohmann::json& j);

}  // namespace corefbench
