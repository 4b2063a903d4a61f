#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "corefbench/checkpoint.hpp"
#include "corefbench/encoder.hpp"
#include "corefbench/objectives.hpp"
#include "corefbench/optim.hpp"
#include "corefbench/schema.hpp"

#include <nlohmann/json_fwd.hpp>

namespace corefbench {

/// Parameters of one training run. (config, data, seed) fully determine every
/// reported number.
struct RunConfig {
    Objective objective = Objective::css;
    double learning_rate = 1e-5;
    std::size_t num_epochs = 3;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::string train_path, dev_path;  // provenance only; data is passed in
    EncoderConfig encoder;
    AdamWConfig adamw;
    bool warm_start = false;
    std::size_t warm_start_steps = 1500;
    double warm_start_lr = 3e-4;
    std::string encoder_checkpoint;  // load instead of fresh init when set
    std::string checkpoint_out;      // save encoder+head here when set

    void validate() const;
};

struct RunResult {
    RunConfig config;
    std::vector<double> epoch_dev_accuracy;
    double final_dev_accuracy = 0.0;
    bool converged = false;
    bool diverged = false;  // aborted on non-finite loss
    bool failed = false;    // run threw; see error
    std::string error;
    double wall_time_sec = 0.0;
    std::size_t train_excluded = 0;
    std::size_t dev_excluded = 0;
    std::size_t unk_candidate_warnings = 0;
    std::size_t tie_predictions = 0;
};

nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_result_to_json(const RunResult& result);
RunResult run_result_from_json(const nlohmann::json& j);
void save_run_record(const std::string& path, const RunResult& result);
RunResult load_run_record(const std::string& path);

/// `<objective>_<lr>_<epochs>_<batch>_<seed>.json`
std::string run_record_filename(const RunConfig& config);

/// One head instance per objective (the word-prediction objective has no
/// trainable head of its own).
struct ObjectiveHead {
    Objective objective = Objective::bwp;
    std::optional<WgsrHead> wgsr;
    std::optional<CssHead> css;
    std::optional<MasHead> mas;

    static ObjectiveHead init(Objective objective, const EncoderConfig& config,
                              std::mt19937_64& rng);
    std::vector<TensorPtr> parameters() const;
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
    ObjectiveHead clone() const;
};

/// Objective-specific model inputs for a list of instances. Instances whose
/// candidate spans cannot be localized are excluded (and counted) for the
/// similarity and attention objectives only.
struct PreparedDataset {
    Objective objective = Objective::bwp;
    std::vector<MaskedInput> masked;  // all objectives except wg-sr
    std::vector<SrInputPair> sr;      // wg-sr
    std::vector<int> labels;          // 0-based; aligned with inputs
    std::vector<std::string> ids;
    std::size_t excluded = 0;
    std::size_t unk_candidate_warnings = 0;

    std::size_t size() const { return labels.size(); }
};

PreparedDataset prepare_dataset(Objective objective,
                                const std::vector<SchemaInstance>& instances,
                                const Vocab& vocab, bool require_labels);

HeadOutput head_forward(const PreparedDataset& data, std::size_t index,
                        const EncoderParams& encoder, const ObjectiveHead& head,
                        const EncodeOptions& opts = {});

struct EvalResult {
    double accuracy = 0.0;
    std::size_t evaluated = 0;
    std::size_t excluded = 0;
    std::size_t ties = 0;
};

/// Accuracy in eval mode. Requires a labeled dataset.
EvalResult evaluate(const EncoderParams& encoder, const ObjectiveHead& head,
                    const PreparedDataset& data);

/// Strictly above the 0.60 development-accuracy threshold.
bool is_converged(double dev_accuracy);

struct TrainHooks {
    // called once per training batch with the instance ids it contains
    std::function<void(const std::vector<std::string>&)> on_train_batch;
};

struct TrainedModel {
    EncoderParams encoder;
    ObjectiveHead head;
    Vocab vocab;
};

RunResult train_run(const RunConfig& config, const std::vector<SchemaInstance>& train_data,
                    const std::vector<SchemaInstance>& dev_data, const TrainHooks& hooks = {},
                    TrainedModel* trained_out = nullptr);

struct GridSpace {
    std::vector<double> learning_rates{5e-6, 1e-5, 3e-5, 5e-5};
    std::vector<std::size_t> epoch_counts{3, 4, 5, 8};
    std::vector<std::size_t> batch_sizes{8, 16};
};

struct GridOutcome {
    std::vector<RunResult> results;
    std::size_t executed = 0;
    std::size_t resumed = 0;  // valid run records found on disk and reused
};

/// Full factorial sweep over the space and seeds. Run records are persisted
/// incrementally under output_dir (when non-empty), so an interrupted grid
/// resumes without recomputing. Individual run failures are recorded and the
/// grid continues. Runs are isolated; up to `jobs` execute in parallel.
GridOutcome grid_search(const RunConfig& base, const GridSpace& space,
                        const std::vector<std::uint64_t>& seeds,
                        const std::vector<SchemaInstance>& train_data,
                        const std::vector<SchemaInstance>& dev_data,
                        const std::string& output_dir, int jobs = 1,
                        const TrainHooks& hooks = {});

/// Hyperparameter combination with the greatest maximum final dev accuracy
/// across its seeds; ties break toward lower lr, fewer epochs, smaller batch.
RunConfig select_best(const std::vector<RunResult>& results);

/// n runs with consecutive seeds base.seed .. base.seed + n - 1.
GridOutcome seed_sweep(const RunConfig& base, std::size_t n_seeds,
                       const std::vector<SchemaInstance>& train_data,
                       const std::vector<SchemaInstance>& dev_data,
                       const std::string& output_dir, int jobs = 1,
                       const TrainHooks& hooks = {});

}  // namespace corefbench
