#include "corefbench/vocab.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <stdexcept>

namespace corefbench {

namespace {

const std::array<std::string, Vocab::kNumReserved> kReservedTokens = {
    "<s>", "<pad>", "</s>", "<unk>", "<mask>"};

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-';
}

// Returns the length of a reserved marker starting at position i, or 0.
std::size_t reserved_prefix_len(const std::string& text, std::size_t i) {
    if (text[i] != '<') return 0;
    for (const auto& tok : kReservedTokens) {
        if (text.compare(i, tok.size(), tok) == 0) return tok.size();
    }
    return 0;
}

}  // namespace

std::size_t Vocab::id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(std::size_t id) const {
    if (id >= id_to_token.size()) {
        throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range " +
                                std::to_string(id_to_token.size()));
    }
    return id_to_token[id];
}

std::vector<std::string> split_words(const std::string& text, bool lowercase) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (std::size_t len = reserved_prefix_len(text, i); len > 0) {
            out.push_back(text.substr(i, len));
            i += len;
            continue;
        }
        if (is_word_char(c)) {
            std::size_t j = i;
            while (j < text.size() && is_word_char(text[j])) ++j;
            std::string word = text.substr(i, j - i);
            if (lowercase) {
                std::transform(word.begin(), word.end(), word.begin(), [](unsigned char ch) {
                    return static_cast<char>(std::tolower(ch));
                });
            }
            out.push_back(std::move(word));
            i = j;
        } else {
            out.push_back(std::string(1, c));
            ++i;
        }
    }
    return out;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_count) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::map<std::string, std::size_t> counts;  // ordered for deterministic ids
    for (const auto& text : corpus) {
        for (const auto& word : split_words(text)) ++counts[word];
    }
    Vocab vocab;
    for (const auto& tok : kReservedTokens) {
        vocab.token_to_id[tok] = vocab.id_to_token.size();
        vocab.id_to_token.push_back(tok);
    }
    for (const auto& [word, count] : counts) {
        if (count < min_count) continue;
        if (vocab.token_to_id.count(word)) continue;  // reserved marker in corpus text
        vocab.token_to_id[word] = vocab.id_to_token.size();
        vocab.id_to_token.push_back(word);
    }
    return vocab;
}

std::vector<std::size_t> tokenize(const std::string& text, const Vocab& vocab) {
    std::vector<std::size_t> ids;
    ids.push_back(Vocab::kBos);
    for (const auto& word : split_words(text)) ids.push_back(vocab.id_of(word));
    ids.push_back(Vocab::kEos);
    return ids;
}

std::vector<std::size_t> encode_words(const std::string& text, const Vocab& vocab) {
    std::vector<std::size_t> ids;
    for (const auto& word : split_words(text)) ids.push_back(vocab.id_of(word));
    return ids;
}

std::vector<std::string> decode(const std::vector<std::size_t>& ids, const Vocab& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (std::size_t id : ids) out.push_back(vocab.token_of(id));
    return out;
}

}  // namespace corefbench
