#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "corefbench/vocab.hpp"

namespace corefbench {

/// One pronoun-resolution example: text with a single "_" gap, two candidate
/// strings, and an optional 1-based gold candidate index.
struct SchemaInstance {
    std::string id;
    std::string text;
    std::string candidate1;
    std::string candidate2;
    std::optional<int> answer;  // 1 or 2

    void validate() const;
    const std::string& candidate(int index) const;  // index in {1,2}
};

enum class SchemaFormat { winogrande, dpr, wsc, unified };
SchemaFormat schema_format_from_string(const std::string& name);
std::string schema_format_name(SchemaFormat format);

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

std::vector<SchemaInstance> parse_schema_jsonl(std::istream& in, SchemaFormat format);
std::vector<SchemaInstance> parse_schema_jsonl_file(const std::string& path, SchemaFormat format);
void write_unified_jsonl(std::ostream& out, const std::vector<SchemaInstance>& instances);
void write_unified_jsonl_file(const std::string& path,
                              const std::vector<SchemaInstance>& instances);

/// Inclusive token-index span of a candidate inside a tokenized sentence.
struct CandidateSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t length() const { return end - start + 1; }
};

class NotFoundError : public std::runtime_error {
public:
    explicit NotFoundError(const std::string& msg) : std::runtime_error(msg) {}
};

class UnrepairableError : public std::runtime_error {
public:
    explicit UnrepairableError(const std::string& msg) : std::runtime_error(msg) {}
};

struct LocalizeResult {
    std::optional<CandidateSpan> span;  // first occurrence
    std::size_t occurrences = 0;
};

/// All matches of the candidate's word tokens inside text_tokens (both sides
/// lowercased by split_words, so matching is case-insensitive).
LocalizeResult find_candidate(const std::vector<std::string>& text_tokens,
                              const std::string& candidate);

/// First exact token-sequence match; throws NotFoundError when absent.
CandidateSpan localize_candidate(const std::vector<std::string>& text_tokens,
                                 const std::string& candidate);

struct MismatchReport {
    bool c1_found = false;
    bool c2_found = false;
    std::size_t c1_occurrences = 0;
    std::size_t c2_occurrences = 0;
    bool mismatch() const { return !c1_found || !c2_found; }
};

/// Attempts to localize both candidates in the instance's gapped text.
MismatchReport detect_candidate_mismatch(const SchemaInstance& instance);

struct OverrideEntry {
    std::string id;
    int candidate_index = 0;  // 1 or 2
    std::string replacement;
};

using OverrideMap = std::map<std::string, std::vector<OverrideEntry>>;

std::vector<OverrideEntry> parse_override_jsonl(std::istream& in);
std::vector<OverrideEntry> parse_override_jsonl_file(const std::string& path);
OverrideMap index_overrides(const std::vector<OverrideEntry>& entries);

/// Replaces candidates that fail localization. An override entry for the
/// instance id wins; otherwise the candidate is replaced by the text window
/// of the same token length that ends at an occurrence of the candidate's
/// final token and has maximal positional token overlap with it (ties to the
/// earliest window). Throws UnrepairableError when the final token never
/// occurs in the text.
SchemaInstance repair_candidate(const SchemaInstance& instance, const OverrideMap& overrides);

/// Masked model input shared by the word-prediction, similarity, and
/// attention heads: the gap becomes <mask>; candidates are tokenized
/// independently; spans locate the candidates elsewhere in the sentence.
struct MaskedInput {
    std::string instance_id;
    std::vector<std::string> tokens;  // lowercased, with <s>/</s>
    std::vector<std::size_t> ids;
    std::size_t mask_position = 0;
    std::vector<std::size_t> c1_ids, c2_ids;
    bool c1_has_unk = false, c2_has_unk = false;
    std::optional<CandidateSpan> c1_span, c2_span;  // empty when localization failed
    std::size_t c1_occurrences = 0, c2_occurrences = 0;
    std::optional<int> label;  // answer - 1
};

MaskedInput build_masked_input(const SchemaInstance& instance, const Vocab& vocab);

/// Sequence-ranking input pair: the text split immediately before the gap,
/// each sequence of the form <s> prefix </s> </s> candidate+suffix </s>.
struct SrInputPair {
    std::string instance_id;
    std::vector<std::size_t> seq1, seq2;
    std::optional<int> correct_index;  // answer - 1
};

SrInputPair build_sr_inputs(const SchemaInstance& instance, const Vocab& vocab);

/// Repair bookkeeping for the preprocessing pipeline and its TSV report.
struct RepairOutcome {
    SchemaInstance instance;
    MismatchReport before;
    std::string action;  // "ok", "override", "repaired", "unrepairable"
    bool excluded = false;
};

std::vector<RepairOutcome> repair_dataset(const std::vector<SchemaInstance>& instances,
                                          const OverrideMap& overrides);
void write_mismatch_report_tsv(std::ostream& out, const std::vector<RepairOutcome>& outcomes);

}  // namespace corefbench
