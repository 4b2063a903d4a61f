#include "corefbench/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace corefbench {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'B', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

std::uint64_t read_u64(std::istream& is) {
    char buf[8];
    is.read(buf, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]))
                                     << (8 * i);
    return v;
}

}  // namespace

void config_to_json(const EncoderConfig& cfg, nlohmann::json& j) {
    j["num_layers"] = cfg.num_layers;
    j["num_heads"] = cfg.num_heads;
    j["hidden_size"] = cfg.hidden_size;
    j["ffn_size"] = cfg.ffn_size;
    j["vocab_size"] = cfg.vocab_size;
    j["max_seq_len"] = cfg.max_seq_len;
    j["dropout"] = cfg.dropout;
    j["similarity_layer"] = cfg.similarity_layer;
}

EncoderConfig config_from_json(const nlohmann::json& j) {
    EncoderConfig cfg;
    cfg.num_layers = j.value("num_layers", cfg.num_layers);
    cfg.num_heads = j.value("num_heads", cfg.num_heads);
    cfg.hidden_size = j.value("hidden_size", cfg.hidden_size);
    cfg.ffn_size = j.value("ffn_size", cfg.ffn_size);
    cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
    cfg.max_seq_len = j.value("max_seq_len", cfg.max_seq_len);
    cfg.dropout = j.value("dropout", cfg.dropout);
    cfg.similarity_layer = j.value("similarity_layer", cfg.similarity_layer);
    return cfg;
}

void Checkpoint::put_encoder(const EncoderParams& model) {
    config = model.config;
    put_named("encoder.", model.named_parameters());
}

void Checkpoint::put_named(const std::string& prefix,
                           const std::vector<std::pair<std::string, TensorPtr>>& named) {
    for (const auto& [name, t] : named) tensors[prefix + name] = t;
}

EncoderParams Checkpoint::take_encoder() const {
    EncoderParams m;
    m.config = config;
    auto take = [this](const std::string& name) {
        auto it = tensors.find("encoder." + name);
        if (it == tensors.end()) {
            throw std::runtime_error("checkpoint: missing tensor encoder." + name);
        }
        auto t = make_tensor(it->second->shape, it->second->values, true);
        return t;
    };
    m.tok_emb = take("tok_emb");
    m.pos_emb = take("pos_emb");
    m.emb_ln_gain = take("emb_ln_gain");
    m.emb_ln_bias = take("emb_ln_bias");
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        EncoderLayerParams layer;
        layer.wq = take(p + "wq");
        layer.bq = take(p + "bq");
        layer.wk = take(p + "wk");
        layer.bk = take(p + "bk");
        layer.wv = take(p + "wv");
        layer.bv = take(p + "bv");
        layer.wo = take(p + "wo");
        layer.bo = take(p + "bo");
        layer.ln1_gain = take(p + "ln1_gain");
        layer.ln1_bias = take(p + "ln1_bias");
        layer.ffn_w1 = take(p + "ffn_w1");
        layer.ffn_b1 = take(p + "ffn_b1");
        layer.ffn_w2 = take(p + "ffn_w2");
        layer.ffn_b2 = take(p + "ffn_b2");
        layer.ln2_gain = take(p + "ln2_gain");
        layer.ln2_bias = take(p + "ln2_bias");
        m.layers.push_back(std::move(layer));
    }
    m.lm_bias = take("lm_bias");
    return m;
}

Vocab Checkpoint::take_vocab() const {
    Vocab v;
    v.id_to_token = vocab_tokens;
    for (std::size_t i = 0; i < v.id_to_token.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
    return v;
}

Checkpoint make_encoder_checkpoint(const EncoderParams& model, const Vocab& vocab) {
    Checkpoint ck;
    ck.vocab_tokens = vocab.id_to_token;
    ck.put_encoder(model);
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    nlohmann::json header;
    header["format_version"] = 1;
    config_to_json(ck.config, header["config"]);
    header["vocab"] = ck.vocab_tokens;
    header["meta"] = ck.meta;
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;  // in doubles
    for (const auto& [name, t] : ck.tensors) {
        index.push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
        offset += t->size();
    }
    header["tensors"] = index;
    const std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u64(os, header_str.size());
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, t] : ck.tensors) {
        os.write(reinterpret_cast<const char*>(t->values.data()),
                 static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const std::uint64_t header_len = read_u64(is);
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw std::runtime_error("checkpoint: truncated header in " + path);
    nlohmann::json header = nlohmann::json::parse(header_str);
    if (header.value("format_version", 0) != 1) {
        throw std::runtime_error("checkpoint: unsupported format version in " + path);
    }

    Checkpoint ck;
    ck.config = config_from_json(header.at("config"));
    ck.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
    if (header.contains("meta")) {
        for (auto it = header["meta"].begin(); it != header["meta"].end(); ++it) {
            ck.meta[it.key()] = it.value().get<std::string>();
        }
    }
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        std::vector<double> values(shape_numel(shape));
        is.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated payload in " + path);
        ck.tensors[name] = make_tensor(shape, std::move(values), true);
    }
    return ck;
}

}  // namespace corefbench
