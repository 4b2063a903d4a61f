#include "corefbench/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

namespace corefbench {

void RunConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("run config: learning_rate must be > 0");
    if (num_epochs < 1) throw std::invalid_argument("run config: num_epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("run config: batch_size must be >= 1");
}

nlohmann::json run_config_to_json(const RunConfig& config) {
    nlohmann::json j;
    j["objective"] = objective_name(config.objective);
    j["learning_rate"] = config.learning_rate;
    j["num_epochs"] = config.num_epochs;
    j["batch_size"] = config.batch_size;
    j["seed"] = config.seed;
    j["train_path"] = config.train_path;
    j["dev_path"] = config.dev_path;
    config_to_json(config.encoder, j["encoder"]);
    j["adamw"] = {{"beta1", config.adamw.beta1},
                  {"beta2", config.adamw.beta2},
                  {"epsilon", config.adamw.epsilon},
                  {"weight_decay", config.adamw.weight_decay}};
    j["warm_start"] = config.warm_start;
    j["warm_start_steps"] = config.warm_start_steps;
    j["warm_start_lr"] = config.warm_start_lr;
    j["encoder_checkpoint"] = config.encoder_checkpoint;
    j["checkpoint_out"] = config.checkpoint_out;
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.objective = objective_from_string(j.at("objective").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.num_epochs = j.at("num_epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.train_path = j.value("train_path", "");
    c.dev_path = j.value("dev_path", "");
    if (j.contains("encoder")) c.encoder = config_from_json(j["encoder"]);
    if (j.contains("adamw")) {
        const auto& a = j["adamw"];
        c.adamw.beta1 = a.value("beta1", c.adamw.beta1);
        c.adamw.beta2 = a.value("beta2", c.adamw.beta2);
        c.adamw.epsilon = a.value("epsilon", c.adamw.epsilon);
        c.adamw.weight_decay = a.value("weight_decay", c.adamw.weight_decay);
    }
    c.warm_start = j.value("warm_start", false);
    c.warm_start_steps = j.value("warm_start_steps", c.warm_start_steps);
    c.warm_start_lr = j.value("warm_start_lr", c.warm_start_lr);
    c.encoder_checkpoint = j.value("encoder_checkpoint", "");
    c.checkpoint_out = j.value("checkpoint_out", "");
    return c;
}

nlohmann::json run_result_to_json(const RunResult& result) {
    nlohmann::json j;
    j["config"] = run_config_to_json(result.config);
    j["epoch_dev_accuracy"] = result.epoch_dev_accuracy;
    j["final_dev_accuracy"] = result.final_dev_accuracy;
    j["converged"] = result.converged;
    j["diverged"] = result.diverged;
    j["failed"] = result.failed;
    j["error"] = result.error;
    j["wall_time_sec"] = result.wall_time_sec;
    j["train_excluded"] = result.train_excluded;
    j["dev_excluded"] = result.dev_excluded;
    j["unk_candidate_warnings"] = result.unk_candidate_warnings;
    j["tie_predictions"] = result.tie_predictions;
    return j;
}

RunResult run_result_from_json(const nlohmann::json& j) {
    RunResult r;
    r.config = run_config_from_json(j.at("config"));
    r.epoch_dev_accuracy = j.at("epoch_dev_accuracy").get<std::vector<double>>();
    r.final_dev_accuracy = j.at("final_dev_accuracy").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.diverged = j.value("diverged", false);
    r.failed = j.value("failed", false);
    r.error = j.value("error", "");
    r.wall_time_sec = j.value("wall_time_sec", 0.0);
    r.train_excluded = j.value("train_excluded", std::size_t{0});
    r.dev_excluded = j.value("dev_excluded", std::size_t{0});
    r.unk_candidate_warnings = j.value("unk_candidate_warnings", std::size_t{0});
    r.tie_predictions = j.value("tie_predictions", std::size_t{0});
    return r;
}

void save_run_record(const std::string& path, const RunResult& result) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write run record " + path);
    os << run_result_to_json(result).dump(2) << "\n";
}

RunResult load_run_record(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open run record " + path);
    nlohmann::json j;
    is >> j;
    return run_result_from_json(j);
}

std::string run_record_filename(const RunConfig& config) {
    char lr_buf[32];
    std::snprintf(lr_buf, sizeof(lr_buf), "%g", config.learning_rate);
    return objective_name(config.objective) + "_" + lr_buf + "_" +
           std::to_string(config.num_epochs) + "_" + std::to_string(config.batch_size) + "_" +
           std::to_string(config.seed) + ".json";
}

ObjectiveHead ObjectiveHead::init(Objective objective, const EncoderConfig& config,
                                  std::mt19937_64& rng) {
    ObjectiveHead head;
    head.objective = objective;
    switch (objective) {
        case Objective::wg_sr: head.wgsr = WgsrHead::init(config.hidden_size, rng); break;
        case Objective::bwp: break;
        case Objective::css: head.css = CssHead::init(config.hidden_size, rng); break;
        case Objective::mas: head.mas = MasHead::init(config.num_layers, config.num_heads, rng);
            break;
    }
    return head;
}

std::vector<TensorPtr> ObjectiveHead::parameters() const {
    if (wgsr) return wgsr->parameters();
    if (css) return css->parameters();
    if (mas) return mas->parameters();
    return {};
}

std::vector<std::pair<std::string, TensorPtr>> ObjectiveHead::named_parameters() const {
    if (wgsr) return wgsr->named_parameters();
    if (css) return css->named_parameters();
    if (mas) return mas->named_parameters();
    return {};
}

ObjectiveHead ObjectiveHead::clone() const {
    ObjectiveHead c;
    c.objective = objective;
    if (wgsr) c.wgsr = wgsr->clone();
    if (css) c.css = css->clone();
    if (mas) c.mas = mas->clone();
    return c;
}

PreparedDataset prepare_dataset(Objective objective,
                                const std::vector<SchemaInstance>& instances,
                                const Vocab& vocab, bool require_labels) {
    PreparedDataset data;
    data.objective = objective;
    const bool needs_spans = objective == Objective::css || objective == Objective::mas;
    for (const auto& inst : instances) {
        if (require_labels && !inst.answer) {
            throw std::invalid_argument("instance " + inst.id +
                                        ": dataset is unlabeled (missing answer)");
        }
        if (objective == Objective::wg_sr) {
            SrInputPair pair = build_sr_inputs(inst, vocab);
            data.labels.push_back(pair.correct_index.value_or(-1));
            data.ids.push_back(inst.id);
            data.sr.push_back(std::move(pair));
            continue;
        }
        MaskedInput input = build_masked_input(inst, vocab);
        if (needs_spans && (!input.c1_span || !input.c2_span)) {
            ++data.excluded;
            continue;
        }
        if (input.c1_has_unk || input.c2_has_unk) ++data.unk_candidate_warnings;
        data.labels.push_back(input.label.value_or(-1));
        data.ids.push_back(inst.id);
        data.masked.push_back(std::move(input));
    }
    return data;
}

HeadOutput head_forward(const PreparedDataset& data, std::size_t index,
                        const EncoderParams& encoder, const ObjectiveHead& head,
                        const EncodeOptions& opts) {
    switch (data.objective) {
        case Objective::wg_sr: return wgsr_forward(data.sr.at(index), encoder, *head.wgsr, opts);
        case Objective::bwp: return bwp_forward(data.masked.at(index), encoder, opts);
        case Objective::css:
            return css_forward(data.masked.at(index), encoder, *head.css, opts);
        case Objective::mas:
            return mas_forward(data.masked.at(index), encoder, *head.mas, opts);
    }
    throw std::logic_error("head_forward: bad objective");
}

EvalResult evaluate(const EncoderParams& encoder, const ObjectiveHead& head,
                    const PreparedDataset& data) {
    NoGradGuard no_grad;
    EvalResult result;
    result.excluded = data.excluded;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] < 0) {
            throw std::invalid_argument("evaluate: instance " + data.ids[i] + " is unlabeled");
        }
        HeadOutput out = head_forward(data, i, encoder, head, {});
        Prediction pred = predict(out.pair());
        if (pred.tie) ++result.ties;
        if (pred.index == data.labels[i]) ++correct;
        ++result.evaluated;
    }
    result.accuracy = result.evaluated == 0
                          ? 0.0
                          : static_cast<double>(correct) / static_cast<double>(result.evaluated);
    return result;
}

bool is_converged(double dev_accuracy) {
    if (dev_accuracy < 0.0 || dev_accuracy > 1.0) {
        throw std::invalid_argument("is_converged: accuracy out of [0,1]");
    }
    return dev_accuracy > 0.60;
}

namespace {

// Corpus the warm start trains on: gapped texts with the gold candidate
// substituted, plus candidate strings so every candidate word is in-vocab.
std::vector<std::string> warm_start_corpus(const std::vector<SchemaInstance>& instances) {
    std::vector<std::string> corpus;
    for (const auto& inst : instances) {
        if (!inst.answer) continue;
        std::string filled = inst.text;
        const std::size_t gap = filled.find('_');
        if (gap == std::string::npos) continue;
        filled.replace(gap, 1, inst.candidate(*inst.answer));
        corpus.push_back(std::move(filled));
    }
    return corpus;
}

std::vector<std::string> vocab_corpus(const std::vector<SchemaInstance>& instances) {
    std::vector<std::string> corpus;
    for (const auto& inst : instances) {
        std::string text = inst.text;
        const std::size_t gap = text.find('_');
        if (gap != std::string::npos) text.replace(gap, 1, " ");
        corpus.push_back(std::move(text));
        corpus.push_back(inst.candidate1);
        corpus.push_back(inst.candidate2);
    }
    return corpus;
}

}  // namespace

RunResult train_run(const RunConfig& config, const std::vector<SchemaInstance>& train_data,
                    const std::vector<SchemaInstance>& dev_data, const TrainHooks& hooks,
                    TrainedModel* trained_out) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();

    RunResult result;
    result.config = config;

    std::mt19937_64 rng(config.seed);

    Vocab vocab;
    EncoderParams encoder;
    if (!config.encoder_checkpoint.empty()) {
        Checkpoint ck = load_checkpoint(config.encoder_checkpoint);
        vocab = ck.take_vocab();
        encoder = ck.take_encoder();
    } else {
        if (train_data.empty() && dev_data.empty()) {
            throw std::invalid_argument("train_run: no data and no encoder checkpoint");
        }
        vocab = build_vocab(vocab_corpus(train_data.empty() ? dev_data : train_data));
        EncoderConfig enc_cfg = config.encoder;
        enc_cfg.vocab_size = vocab.size();
        encoder = EncoderParams::init(enc_cfg, rng);
        if (config.warm_start && config.warm_start_steps > 0) {
            MlmOptions mlm;
            mlm.steps = config.warm_start_steps;
            mlm.lr = config.warm_start_lr;
            mlm.seed = rng();
            mlm.adamw = config.adamw;
            pretrain_mlm(encoder, warm_start_corpus(train_data), vocab, mlm);
        }
    }

    PreparedDataset train = prepare_dataset(config.objective, train_data, vocab, true);
    PreparedDataset dev = prepare_dataset(config.objective, dev_data, vocab, true);
    result.train_excluded = train.excluded;
    result.dev_excluded = dev.excluded;
    result.unk_candidate_warnings = train.unk_candidate_warnings + dev.unk_candidate_warnings;

    ObjectiveHead head = ObjectiveHead::init(config.objective, encoder.config, rng);

    std::vector<TensorPtr> params = encoder.parameters();
    for (const auto& p : head.parameters()) params.push_back(p);
    AdamW optimizer(params, config.adamw);

    const std::size_t n_train = train.size();
    const std::size_t steps_per_epoch =
        n_train == 0 ? 0 : (n_train + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = config.num_epochs * steps_per_epoch;
    std::optional<LrSchedule> schedule;
    if (total_steps > 0) {
        schedule = LrSchedule::linear_warmup_decay(config.learning_rate, total_steps);
    }

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.num_epochs && !result.diverged; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n_train && !result.diverged;
             start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, n_train);
            if (hooks.on_train_batch) {
                std::vector<std::string> batch_ids;
                for (std::size_t k = start; k < end; ++k) batch_ids.push_back(train.ids[order[k]]);
                hooks.on_train_batch(batch_ids);
            }
            optimizer.zero_grad();
            std::vector<TensorPtr> losses;
            losses.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                EncodeOptions opts{.training = true, .rng = &rng};
                HeadOutput out = head_forward(train, i, encoder, head, opts);
                losses.push_back(objective_loss(out, train.labels[i]));
            }
            TensorPtr loss = mean_of(losses);
            if (!std::isfinite(loss->scalar())) {
                result.diverged = true;
                break;
            }
            backward(loss);
            optimizer.step(schedule->lr_at(step));
            ++step;
        }
        EvalResult dev_eval = evaluate(encoder, head, dev);
        result.epoch_dev_accuracy.push_back(dev_eval.accuracy);
        result.tie_predictions = dev_eval.ties;
    }

    if (result.epoch_dev_accuracy.empty()) {
        EvalResult dev_eval = evaluate(encoder, head, dev);
        result.epoch_dev_accuracy.push_back(dev_eval.accuracy);
        result.tie_predictions = dev_eval.ties;
    }
    result.final_dev_accuracy = result.epoch_dev_accuracy.back();
    result.converged = !result.diverged && is_converged(result.final_dev_accuracy);

    if (!config.checkpoint_out.empty()) {
        Checkpoint ck = make_encoder_checkpoint(encoder, vocab);
        ck.put_named("head." + objective_name(config.objective) + ".", head.named_parameters());
        ck.meta["objective"] = objective_name(config.objective);
        save_checkpoint(config.checkpoint_out, ck);
    }
    if (trained_out != nullptr) {
        trained_out->encoder = std::move(encoder);
        trained_out->head = std::move(head);
        trained_out->vocab = std::move(vocab);
    }

    result.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

namespace {

std::vector<RunResult> run_many(const std::vector<RunConfig>& configs,
                                const std::vector<SchemaInstance>& train_data,
                                const std::vector<SchemaInstance>& dev_data,
                                const std::string& output_dir, int jobs,
                                const TrainHooks& hooks, std::size_t* executed,
                                std::size_t* resumed) {
    if (!output_dir.empty()) std::filesystem::create_directories(output_dir);
    std::vector<RunResult> results(configs.size());
    std::mutex counter_mutex;
    std::size_t next = 0;

    auto worker = [&]() {
        while (true) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(counter_mutex);
                if (next >= configs.size()) return;
                i = next++;
            }
            const RunConfig& config = configs[i];
            std::string record_path;
            if (!output_dir.empty()) {
                record_path =
                    (std::filesystem::path(output_dir) / run_record_filename(config)).string();
                if (std::filesystem::exists(record_path)) {
                    try {
                        results[i] = load_run_record(record_path);
                        std::lock_guard<std::mutex> lock(counter_mutex);
                        ++*resumed;
                        continue;
                    } catch (const std::exception&) {
                        // unreadable record: recompute below
                    }
                }
            }
            RunResult result;
            try {
                result = train_run(config, train_data, dev_data, hooks);
            } catch (const std::exception& e) {
                result.config = config;
                result.failed = true;
                result.error = e.what();
            }
            if (!record_path.empty()) save_run_record(record_path, result);
            results[i] = result;
            {
                std::lock_guard<std::mutex> lock(counter_mutex);
                ++*executed;
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_workers));
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return results;
}

}  // namespace

GridOutcome grid_search(const RunConfig& base, const GridSpace& space,
                        const std::vector<std::uint64_t>& seeds,
                        const std::vector<SchemaInstance>& train_data,
                        const std::vector<SchemaInstance>& dev_data,
                        const std::string& output_dir, int jobs, const TrainHooks& hooks) {
    if (space.learning_rates.empty() || space.epoch_counts.empty() ||
        space.batch_sizes.empty() || seeds.empty()) {
        throw std::invalid_argument("grid_search: empty grid dimension");
    }
    std::vector<RunConfig> configs;
    for (double lr : space.learning_rates) {
        for (std::size_t epochs : space.epoch_counts) {
            for (std::size_t batch : space.batch_sizes) {
                for (std::uint64_t seed : seeds) {
                    RunConfig c = base;
                    c.learning_rate = lr;
                    c.num_epochs = epochs;
                    c.batch_size = batch;
                    c.seed = seed;
                    configs.push_back(std::move(c));
                }
            }
        }
    }
    GridOutcome outcome;
    outcome.results = run_many(configs, train_data, dev_data, output_dir, jobs, hooks,
                               &outcome.executed, &outcome.resumed);
    return outcome;
}

RunConfig select_best(const std::vector<RunResult>& results) {
    struct Key {
        double lr;
        std::size_t epochs;
        std::size_t batch;
        bool operator<(const Key& o) const {
            return std::tie(lr, epochs, batch) < std::tie(o.lr, o.epochs, o.batch);
        }
        bool operator==(const Key& o) const {
            return lr == o.lr && epochs == o.epochs && batch == o.batch;
        }
    };
    std::map<Key, std::pair<double, const RunResult*>> best_per_combo;
    for (const auto& r : results) {
        if (r.failed || r.diverged) continue;
        const Key key{r.config.learning_rate, r.config.num_epochs, r.config.batch_size};
        auto it = best_per_combo.find(key);
        if (it == best_per_combo.end() || r.final_dev_accuracy > it->second.first) {
            best_per_combo[key] = {r.final_dev_accuracy, &r};
        }
    }
    if (best_per_combo.empty()) {
        throw std::runtime_error("select_best: every run diverged or failed");
    }
    std::optional<Key> best_key;
    double best_score = -1.0;
    for (const auto& [key, entry] : best_per_combo) {  // ascending (lr, epochs, batch)
        if (!best_key || entry.first > best_score) {
            best_key = key;
            best_score = entry.first;
        } else if (entry.first == best_score) {
            std::clog << "select_best: tie at accuracy " << best_score << ", kept lr="
                      << best_key->lr << " epochs=" << best_key->epochs
                      << " batch=" << best_key->batch << "\n";
        }
    }
    RunConfig best = best_per_combo[*best_key].second->config;
    return best;
}

GridOutcome seed_sweep(const RunConfig& base, std::size_t n_seeds,
                       const std::vector<SchemaInstance>& train_data,
                       const std::vector<SchemaInstance>& dev_data,
                       const std::string& output_dir, int jobs, const TrainHooks& hooks) {
    if (n_seeds == 0) throw std::invalid_argument("seed_sweep: n_seeds must be >= 1");
    std::vector<RunConfig> configs;
    configs.reserve(n_seeds);
    for (std::size_t i = 0; i < n_seeds; ++i) {
        RunConfig c = base;
        c.seed = base.seed + i;
        configs.push_back(std::move(c));
    }
    GridOutcome outcome;
    outcome.results = run_many(configs, train_data, dev_data, output_dir, jobs, hooks,
                               &outcome.executed, &outcome.resumed);
    return outcome;
}

}  // namespace corefbench
