#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace corefbench {

/// Word-level vocabulary with dense ids. The five reserved tokens occupy
/// fixed ids 0..4; regular words follow in lexicographic order.
struct Vocab {
    static constexpr std::size_t kBos = 0;   // <s>
    static constexpr std::size_t kPad = 1;   // <pad>
    static constexpr std::size_t kEos = 2;   // </s>
    static constexpr std::size_t kUnk = 3;   // <unk>
    static constexpr std::size_t kMask = 4;  // <mask>
    static constexpr std::size_t kNumReserved = 5;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, std::size_t> token_to_id;

    std::size_t size() const { return id_to_token.size(); }
    bool contains(const std::string& token) const { return token_to_id.count(token) != 0; }

    /// Unknown words map to <unk>.
    std::size_t id_of(const std::string& token) const;
    const std::string& token_of(std::size_t id) const;

    bool is_reserved(std::size_t id) const { return id < kNumReserved; }
};

/// Splits text into lowercased word-level tokens. Runs of letters, digits,
/// apostrophes, and hyphens form one token; any other non-space character is
/// a single-character token. The reserved marker strings (<s>, </s>, <mask>,
/// <unk>, <pad>) pass through as single tokens.
std::vector<std::string> split_words(const std::string& text, bool lowercase = true);

/// Word-level vocabulary over the corpus; words seen fewer than min_count
/// times are dropped (they tokenize to <unk>).
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_count = 1);

/// <s> + word ids + </s>. The literal <mask> marker maps to its reserved id.
std::vector<std::size_t> tokenize(const std::string& text, const Vocab& vocab);

/// Word ids without the surrounding <s>/</s> (used for candidate strings).
std::vector<std::size_t> encode_words(const std::string& text, const Vocab& vocab);

std::vector<std::string> decode(const std::vector<std::size_t>& ids, const Vocab& vocab);

}  // namespace corefbench
