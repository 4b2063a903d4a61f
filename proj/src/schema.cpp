#include "corefbench/schema.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace corefbench {

namespace {

std::size_t count_gaps(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '_'));
}

}  // namespace

void SchemaInstance::validate() const {
    if (count_gaps(text) != 1) {
        throw std::invalid_argument("instance " + id + ": text must contain exactly one \"_\"");
    }
    if (candidate1 == candidate2) {
        throw std::invalid_argument("instance " + id + ": candidates must differ");
    }
    if (candidate1.empty() || candidate2.empty()) {
        throw std::invalid_argument("instance " + id + ": empty candidate");
    }
    if (answer && *answer != 1 && *answer != 2) {
        throw std::invalid_argument("instance " + id + ": answer must be 1 or 2");
    }
}

const std::string& SchemaInstance::candidate(int index) const {
    if (index == 1) return candidate1;
    if (index == 2) return candidate2;
    throw std::invalid_argument("candidate index must be 1 or 2, got " + std::to_string(index));
}

SchemaFormat schema_format_from_string(const std::string& name) {
    if (name == "winogrande") return SchemaFormat::winogrande;
    if (name == "dpr") return SchemaFormat::dpr;
    if (name == "wsc") return SchemaFormat::wsc;
    if (name == "unified") return SchemaFormat::unified;
    throw std::invalid_argument("unknown schema format \"" + name +
                                "\" (expected winogrande, dpr, wsc, or unified)");
}

std::string schema_format_name(SchemaFormat format) {
    switch (format) {
        case SchemaFormat::winogrande: return "winogrande";
        case SchemaFormat::dpr: return "dpr";
        case SchemaFormat::wsc: return "wsc";
        case SchemaFormat::unified: return "unified";
    }
    return "?";
}

namespace {

const nlohmann::json& require_field(const nlohmann::json& obj, const char* field,
                                    std::size_t line) {
    auto it = obj.find(field);
    if (it == obj.end()) {
        throw ParseError(line, std::string("missing field \"") + field + "\"");
    }
    return *it;
}

std::optional<int> parse_answer_12(const nlohmann::json& j, std::size_t line) {
    if (j.is_null()) return std::nullopt;
    int a = 0;
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s.empty()) return std::nullopt;
        if (s == "1" || s == "A" || s == "a") a = 1;
        else if (s == "2" || s == "B" || s == "b") a = 2;
        else throw ParseError(line, "answer \"" + s + "\" is not 1/2 or A/B");
    } else if (j.is_number_integer()) {
        a = j.get<int>();
    } else {
        throw ParseError(line, "answer has unsupported type");
    }
    if (a != 1 && a != 2) throw ParseError(line, "answer must be 1 or 2");
    return a;
}

SchemaInstance instance_from_json(const nlohmann::json& obj, SchemaFormat format,
                                  std::size_t line) {
    SchemaInstance inst;
    switch (format) {
        case SchemaFormat::winogrande: {
            inst.text = require_field(obj, "sentence", line).get<std::string>();
            inst.candidate1 = require_field(obj, "option1", line).get<std::string>();
            inst.candidate2 = require_field(obj, "option2", line).get<std::string>();
            inst.id = obj.value("qID", "winogrande-" + std::to_string(line));
            if (obj.contains("answer")) inst.answer = parse_answer_12(obj["answer"], line);
            break;
        }
        case SchemaFormat::dpr: {
            inst.text = require_field(obj, "sentence", line).get<std::string>();
            inst.candidate1 = require_field(obj, "candidate_a", line).get<std::string>();
            inst.candidate2 = require_field(obj, "candidate_b", line).get<std::string>();
            inst.id = obj.value("id", "dpr-" + std::to_string(line));
            if (obj.contains("answer")) inst.answer = parse_answer_12(obj["answer"], line);
            break;
        }
        case SchemaFormat::wsc: {
            inst.text = require_field(obj, "text", line).get<std::string>();
            const auto& cands = require_field(obj, "candidates", line);
            if (!cands.is_array() || cands.size() != 2) {
                throw ParseError(line, "field \"candidates\" must be a 2-element array");
            }
            inst.candidate1 = cands[0].get<std::string>();
            inst.candidate2 = cands[1].get<std::string>();
            inst.id = obj.value("id", "wsc-" + std::to_string(line));
            if (obj.contains("answer")) inst.answer = parse_answer_12(obj["answer"], line);
            break;
        }
        case SchemaFormat::unified: {
            inst.text = require_field(obj, "text", line).get<std::string>();
            inst.candidate1 = require_field(obj, "candidate1", line).get<std::string>();
            inst.candidate2 = require_field(obj, "candidate2", line).get<std::string>();
            inst.id = require_field(obj, "id", line).get<std::string>();
            if (obj.contains("answer")) inst.answer = parse_answer_12(obj["answer"], line);
            break;
        }
    }
    try {
        inst.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(line, e.what());
    }
    return inst;
}

}  // namespace

std::vector<SchemaInstance> parse_schema_jsonl(std::istream& in, SchemaFormat format) {
    std::vector<SchemaInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
        }
        out.push_back(instance_from_json(obj, format, line_no));
    }
    return out;
}

std::vector<SchemaInstance> parse_schema_jsonl_file(const std::string& path,
                                                    SchemaFormat format) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_schema_jsonl(in, format);
}

void write_unified_jsonl(std::ostream& out, const std::vector<SchemaInstance>& instances) {
    for (const auto& inst : instances) {
        nlohmann::ordered_json obj;
        obj["id"] = inst.id;
        obj["text"] = inst.text;
        obj["candidate1"] = inst.candidate1;
        obj["candidate2"] = inst.candidate2;
        if (inst.answer) obj["answer"] = *inst.answer;
        out << obj.dump() << "\n";
    }
}

void write_unified_jsonl_file(const std::string& path,
                              const std::vector<SchemaInstance>& instances) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_unified_jsonl(out, instances);
}

LocalizeResult find_candidate(const std::vector<std::string>& text_tokens,
                              const std::string& candidate) {
    if (candidate.empty()) throw std::invalid_argument("localize: empty candidate");
    const std::vector<std::string> cand = split_words(candidate);
    LocalizeResult result;
    if (cand.empty() || cand.size() > text_tokens.size()) return result;
    for (std::size_t start = 0; start + cand.size() <= text_tokens.size(); ++start) {
        bool match = true;
        for (std::size_t k = 0; k < cand.size(); ++k) {
            if (text_tokens[start + k] != cand[k]) {
                match = false;
                break;
            }
        }
        if (match) {
            ++result.occurrences;
            if (!result.span) result.span = CandidateSpan{start, start + cand.size() - 1};
        }
    }
    return result;
}

CandidateSpan localize_candidate(const std::vector<std::string>& text_tokens,
                                 const std::string& candidate) {
    LocalizeResult r = find_candidate(text_tokens, candidate);
    if (!r.span) {
        throw NotFoundError("candidate \"" + candidate + "\" not found in text");
    }
    return *r.span;
}

namespace {

// Token view the detection and repair steps share: the gapped text with the
// gap marker turned into <mask>.
std::vector<std::string> masked_tokens_of(const std::string& text) {
    std::string replaced = text;
    const std::size_t pos = replaced.find('_');
    if (pos != std::string::npos) replaced.replace(pos, 1, " <mask> ");
    return split_words(replaced);
}

bool is_marker(const std::string& token) {
    return token == "<mask>" || token == "<s>" || token == "</s>" || token == "<unk>" ||
           token == "<pad>" || token == "_";
}

}  // namespace

MismatchReport detect_candidate_mismatch(const SchemaInstance& instance) {
    const auto tokens = masked_tokens_of(instance.text);
    MismatchReport report;
    LocalizeResult r1 = find_candidate(tokens, instance.candidate1);
    LocalizeResult r2 = find_candidate(tokens, instance.candidate2);
    report.c1_found = r1.span.has_value();
    report.c2_found = r2.span.has_value();
    report.c1_occurrences = r1.occurrences;
    report.c2_occurrences = r2.occurrences;
    return report;
}

std::vector<OverrideEntry> parse_override_jsonl(std::istream& in) {
    std::vector<OverrideEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
        }
        OverrideEntry entry;
        entry.id = require_field(obj, "id", line_no).get<std::string>();
        entry.candidate_index = require_field(obj, "candidate_index", line_no).get<int>();
        entry.replacement = require_field(obj, "replacement", line_no).get<std::string>();
        if (entry.candidate_index != 1 && entry.candidate_index != 2) {
            throw ParseError(line_no, "candidate_index must be 1 or 2");
        }
        out.push_back(std::move(entry));
    }
    return out;
}

std::vector<OverrideEntry> parse_override_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_override_jsonl(in);
}

OverrideMap index_overrides(const std::vector<OverrideEntry>& entries) {
    OverrideMap map;
    for (const auto& e : entries) map[e.id].push_back(e);
    return map;
}

namespace {

// Window of the candidate's token length ending at an occurrence of its final
// token, scored by positional overlap from the right.
std::optional<std::pair<std::size_t, std::size_t>> best_window(
    const std::vector<std::string>& tokens, const std::vector<std::string>& cand) {
    const std::string& anchor = cand.back();
    std::optional<std::pair<std::size_t, std::size_t>> best;  // (start, end)
    std::size_t best_score = 0;
    for (std::size_t p = 0; p < tokens.size(); ++p) {
        if (tokens[p] != anchor || is_marker(tokens[p])) continue;
        std::size_t start = p + 1 >= cand.size() ? p + 1 - cand.size() : 0;
        // windows never cross the gap or other markers
        for (std::size_t q = start; q < p; ++q) {
            if (is_marker(tokens[q])) start = q + 1;
        }
        std::size_t score = 0;
        const std::size_t len = p - start + 1;
        for (std::size_t k = 0; k < len; ++k) {
            if (tokens[p - k] == cand[cand.size() - 1 - k]) ++score;
        }
        if (!best || score > best_score) {
            best = {start, p};
            best_score = score;
        }
    }
    return best;
}

std::string surface_text(const std::string& text, std::size_t start, std::size_t end) {
    // case-preserving words aligned with the lowercased token list
    std::string replaced = text;
    const std::size_t pos = replaced.find('_');
    if (pos != std::string::npos) replaced.replace(pos, 1, " <mask> ");
    const auto preserved = split_words(replaced, /*lowercase=*/false);
    std::string out;
    for (std::size_t i = start; i <= end && i < preserved.size(); ++i) {
        if (!out.empty()) out += " ";
        out += preserved[i];
    }
    return out;
}

}  // namespace

SchemaInstance repair_candidate(const SchemaInstance& instance, const OverrideMap& overrides) {
    MismatchReport report = detect_candidate_mismatch(instance);
    if (!report.mismatch()) return instance;

    SchemaInstance repaired = instance;
    const auto tokens = masked_tokens_of(instance.text);
    for (int index : {1, 2}) {
        const bool found = index == 1 ? report.c1_found : report.c2_found;
        if (found) continue;

        std::optional<std::string> replacement;
        if (auto it = overrides.find(instance.id); it != overrides.end()) {
            for (const auto& e : it->second) {
                if (e.candidate_index == index) replacement = e.replacement;
            }
        }
        if (!replacement) {
            const auto cand = split_words(repaired.candidate(index));
            auto window = best_window(tokens, cand);
            if (!window) {
                throw UnrepairableError("instance " + instance.id + ": candidate \"" +
                                        repaired.candidate(index) +
                                        "\" has no anchored window in the text");
            }
            replacement = surface_text(instance.text, window->first, window->second);
        }
        if (index == 1) {
            repaired.candidate1 = *replacement;
        } else {
            repaired.candidate2 = *replacement;
        }
    }
    return repaired;
}

MaskedInput build_masked_input(const SchemaInstance& instance, const Vocab& vocab) {
    instance.validate();
    MaskedInput input;
    input.instance_id = instance.id;

    std::vector<std::string> words = masked_tokens_of(instance.text);
    input.tokens.push_back("<s>");
    input.tokens.insert(input.tokens.end(), words.begin(), words.end());
    input.tokens.push_back("</s>");

    input.ids.reserve(input.tokens.size());
    for (const auto& tok : input.tokens) input.ids.push_back(vocab.id_of(tok));

    std::size_t mask_count = 0;
    for (std::size_t i = 0; i < input.ids.size(); ++i) {
        if (input.ids[i] == Vocab::kMask) {
            input.mask_position = i;
            ++mask_count;
        }
    }
    if (mask_count != 1) {
        throw std::invalid_argument("instance " + instance.id + ": expected one mask, found " +
                                    std::to_string(mask_count));
    }

    input.c1_ids = encode_words(instance.candidate1, vocab);
    input.c2_ids = encode_words(instance.candidate2, vocab);
    if (input.c1_ids.empty() || input.c2_ids.empty()) {
        throw std::invalid_argument("instance " + instance.id + ": candidate tokenizes to nothing");
    }
    auto has_unk = [](const std::vector<std::size_t>& ids) {
        return std::find(ids.begin(), ids.end(), Vocab::kUnk) != ids.end();
    };
    input.c1_has_unk = has_unk(input.c1_ids);
    input.c2_has_unk = has_unk(input.c2_ids);

    LocalizeResult r1 = find_candidate(input.tokens, instance.candidate1);
    LocalizeResult r2 = find_candidate(input.tokens, instance.candidate2);
    input.c1_span = r1.span;
    input.c2_span = r2.span;
    input.c1_occurrences = r1.occurrences;
    input.c2_occurrences = r2.occurrences;

    if (instance.answer) input.label = *instance.answer - 1;
    return input;
}

SrInputPair build_sr_inputs(const SchemaInstance& instance, const Vocab& vocab) {
    instance.validate();
    const std::size_t gap = instance.text.find('_');
    const std::string prefix = instance.text.substr(0, gap);
    const std::string suffix = instance.text.substr(gap + 1);

    auto build = [&](const std::string& candidate) {
        std::vector<std::size_t> seq;
        seq.push_back(Vocab::kBos);
        for (const auto& w : split_words(prefix)) seq.push_back(vocab.id_of(w));
        seq.push_back(Vocab::kEos);
        seq.push_back(Vocab::kEos);
        for (const auto& w : split_words(candidate + suffix)) seq.push_back(vocab.id_of(w));
        seq.push_back(Vocab::kEos);
        return seq;
    };

    SrInputPair pair;
    pair.instance_id = instance.id;
    pair.seq1 = build(instance.candidate1);
    pair.seq2 = build(instance.candidate2);
    if (instance.answer) pair.correct_index = *instance.answer - 1;
    return pair;
}

std::vector<RepairOutcome> repair_dataset(const std::vector<SchemaInstance>& instances,
                                          const OverrideMap& overrides) {
    std::vector<RepairOutcome> outcomes;
    outcomes.reserve(instances.size());
    for (const auto& inst : instances) {
        RepairOutcome outcome;
        outcome.before = detect_candidate_mismatch(inst);
        if (!outcome.before.mismatch()) {
            outcome.instance = inst;
            outcome.action = "ok";
        } else {
            const bool overridden = overrides.count(inst.id) != 0;
            try {
                outcome.instance = repair_candidate(inst, overrides);
                outcome.action = overridden ? "override" : "repaired";
                if (detect_candidate_mismatch(outcome.instance).mismatch()) {
                    outcome.action = "unrepairable";
                    outcome.excluded = true;
                }
            } catch (const UnrepairableError&) {
                outcome.instance = inst;
                outcome.action = "unrepairable";
                outcome.excluded = true;
            }
        }
        outcomes.push_back(std::move(outcome));
    }
    return outcomes;
}

void write_mismatch_report_tsv(std::ostream& out, const std::vector<RepairOutcome>& outcomes) {
    out << "id\tc1_found\tc2_found\taction\n";
    for (const auto& o : outcomes) {
        if (o.action == "ok" && !o.before.mismatch()) continue;  // report only flagged rows
        out << o.instance.id << "\t" << (o.before.c1_found ? "true" : "false") << "\t"
            << (o.before.c2_found ? "true" : "false") << "\t" << o.action << "\n";
    }
}

}  // namespace corefbench
