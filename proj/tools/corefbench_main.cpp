// corefbench command line: preprocess / train / grid / sweep / eval / report.
//
// Exit codes: 0 success, 1 usage or input error, 2 completed with flagged
// (unrepairable) instances.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <glob.h>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "corefbench/checkpoint.hpp"
#include "corefbench/report.hpp"
#include "corefbench/schema.hpp"
#include "corefbench/stats.hpp"
#include "corefbench/training.hpp"

namespace fs = std::filesystem;
using namespace corefbench;

namespace {

struct CliConfig {
    std::string data_dir;
    std::string output_dir = "out";
    std::string objective = "css";
    std::string format = "unified";
    std::string train_path, dev_path, input_path;
    std::string override_file;
    std::string checkpoint_in, checkpoint_out;
    std::string preset;
    double lr = 1e-5;
    std::size_t epochs = 3;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::size_t seeds = 20;
    int jobs = 1;
    bool warm_start = false;
    std::size_t warm_start_steps = 3000;
    double warm_start_lr = 3e-4;
    EncoderConfig encoder;
};

void load_config_file(const std::string& path, CliConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    nlohmann::json j;
    in >> j;
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.objective = j.value("objective", cfg.objective);
    cfg.format = j.value("format", cfg.format);
    cfg.train_path = j.value("train", cfg.train_path);
    cfg.dev_path = j.value("dev", cfg.dev_path);
    cfg.input_path = j.value("input", cfg.input_path);
    cfg.override_file = j.value("override_file", cfg.override_file);
    cfg.checkpoint_in = j.value("checkpoint_in", cfg.checkpoint_in);
    cfg.checkpoint_out = j.value("save_checkpoint", cfg.checkpoint_out);
    cfg.preset = j.value("preset", cfg.preset);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.seeds = j.value("seeds", cfg.seeds);
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.warm_start = j.value("warm_start", cfg.warm_start);
    cfg.warm_start_steps = j.value("warm_start_steps", cfg.warm_start_steps);
    cfg.warm_start_lr = j.value("warm_start_lr", cfg.warm_start_lr);
    if (j.contains("encoder")) cfg.encoder = config_from_json(j["encoder"]);
}

nlohmann::json cli_config_to_json(const CliConfig& cfg, const std::string& command) {
    nlohmann::json j;
    j["command"] = command;
    j["data_dir"] = cfg.data_dir;
    j["output_dir"] = cfg.output_dir;
    j["objective"] = cfg.objective;
    j["format"] = cfg.format;
    j["train"] = cfg.train_path;
    j["dev"] = cfg.dev_path;
    j["input"] = cfg.input_path;
    j["override_file"] = cfg.override_file;
    j["checkpoint_in"] = cfg.checkpoint_in;
    j["save_checkpoint"] = cfg.checkpoint_out;
    j["preset"] = cfg.preset;
    j["lr"] = cfg.lr;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["seeds"] = cfg.seeds;
    j["jobs"] = cfg.jobs;
    j["warm_start"] = cfg.warm_start;
    j["warm_start_steps"] = cfg.warm_start_steps;
    j["warm_start_lr"] = cfg.warm_start_lr;
    config_to_json(cfg.encoder, j["encoder"]);
    return j;
}

// relative paths resolve against --data-dir (or COREFBENCH_DATA_DIR) when the
// file is not found as given
std::string resolve_data_path(const CliConfig& cfg, const std::string& path) {
    if (path.empty() || cfg.data_dir.empty()) return path;
    if (fs::path(path).is_absolute() || fs::exists(path)) return path;
    return (fs::path(cfg.data_dir) / path).string();
}

void echo_effective_config(const CliConfig& cfg, const std::string& command) {
    fs::create_directories(cfg.output_dir);
    std::ofstream out(fs::path(cfg.output_dir) / "effective_config.json");
    out << cli_config_to_json(cfg, command).dump(2) << "\n";
}

void apply_preset(CliConfig& cfg, const CLI::App* cmd) {
    if (cfg.preset.empty()) return;
    if (cfg.preset != "table3") {
        throw CLI::ValidationError("--preset", "unknown preset \"" + cfg.preset + "\"");
    }
    struct Entry {
        std::size_t epochs, batch;
        double lr;
    };
    Entry entry;
    const Objective objective = objective_from_string(cfg.objective);
    switch (objective) {
        case Objective::wg_sr: entry = {5, 16, 1e-5}; break;
        case Objective::bwp: entry = {8, 16, 1e-5}; break;
        case Objective::css: entry = {8, 16, 1e-5}; break;
        case Objective::mas: entry = {8, 8, 1e-5}; break;
    }
    // explicit flags still win over the preset
    if (cmd->count("--epochs") == 0) cfg.epochs = entry.epochs;
    if (cmd->count("--batch-size") == 0) cfg.batch_size = entry.batch;
    if (cmd->count("--lr") == 0) cfg.lr = entry.lr;
}

RunConfig make_run_config(const CliConfig& cfg) {
    RunConfig run;
    run.objective = objective_from_string(cfg.objective);
    run.learning_rate = cfg.lr;
    run.num_epochs = cfg.epochs;
    run.batch_size = cfg.batch_size;
    run.seed = cfg.seed;
    run.train_path = resolve_data_path(cfg, cfg.train_path);
    run.dev_path = resolve_data_path(cfg, cfg.dev_path);
    run.encoder = cfg.encoder;
    run.warm_start = cfg.warm_start;
    run.warm_start_steps = cfg.warm_start_steps;
    run.warm_start_lr = cfg.warm_start_lr;
    run.encoder_checkpoint = resolve_data_path(cfg, cfg.checkpoint_in);
    run.checkpoint_out = cfg.checkpoint_out;
    run.validate();
    return run;
}

std::vector<SchemaInstance> load_dataset(const CliConfig& cfg, const std::string& path) {
    return parse_schema_jsonl_file(resolve_data_path(cfg, path),
                                   schema_format_from_string(cfg.format));
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t results;
    std::vector<std::string> paths;
    if (glob(pattern.c_str(), 0, nullptr, &results) == 0) {
        for (std::size_t i = 0; i < results.gl_pathc; ++i) paths.emplace_back(results.gl_pathv[i]);
    }
    globfree(&results);
    return paths;
}

int cmd_preprocess(const CliConfig& cfg) {
    echo_effective_config(cfg, "preprocess");
    auto instances = load_dataset(cfg, cfg.input_path);
    OverrideMap overrides;
    if (!cfg.override_file.empty()) {
        overrides =
            index_overrides(parse_override_jsonl_file(resolve_data_path(cfg, cfg.override_file)));
    }
    auto outcomes = repair_dataset(instances, overrides);

    std::vector<SchemaInstance> kept;
    std::size_t unrepairable = 0;
    for (const auto& o : outcomes) {
        if (o.excluded) {
            ++unrepairable;
            std::cerr << "unrepairable instance excluded: " << o.instance.id << "\n";
        } else {
            kept.push_back(o.instance);
        }
    }

    const fs::path out_dir(cfg.output_dir);
    write_unified_jsonl_file((out_dir / "unified.jsonl").string(), kept);
    std::ofstream report(out_dir / "mismatch_report.tsv");
    write_mismatch_report_tsv(report, outcomes);

    std::cout << "parsed " << instances.size() << " instances, kept " << kept.size()
              << ", unrepairable " << unrepairable << "\n"
              << "wrote " << (out_dir / "unified.jsonl").string() << " and "
              << (out_dir / "mismatch_report.tsv").string() << "\n";
    return unrepairable == 0 ? 0 : 2;
}

int cmd_train(const CliConfig& cfg) {
    echo_effective_config(cfg, "train");
    RunConfig run = make_run_config(cfg);
    auto train_data = load_dataset(cfg, cfg.train_path);
    auto dev_data = load_dataset(cfg, cfg.dev_path);
    RunResult result = train_run(run, train_data, dev_data);
    const fs::path record = fs::path(cfg.output_dir) / run_record_filename(run);
    save_run_record(record.string(), result);
    std::cout << "final dev accuracy " << result.final_dev_accuracy << " ("
              << (result.converged ? "converged" : "not converged") << "), record "
              << record.string() << "\n";
    return 0;
}

int cmd_grid(const CliConfig& cfg) {
    echo_effective_config(cfg, "grid");
    RunConfig base = make_run_config(cfg);
    auto train_data = load_dataset(cfg, cfg.train_path);
    auto dev_data = load_dataset(cfg, cfg.dev_path);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 3; ++s) seeds.push_back(cfg.seed + s);
    GridOutcome outcome =
        grid_search(base, GridSpace{}, seeds, train_data, dev_data, cfg.output_dir, cfg.jobs);
    RunConfig best = select_best(outcome.results);
    std::cout << outcome.results.size() << " runs (" << outcome.executed << " executed, "
              << outcome.resumed << " resumed)\n"
              << "best: lr " << best.learning_rate << ", epochs " << best.num_epochs
              << ", batch " << best.batch_size << "\n";
    return 0;
}

int cmd_sweep(const CliConfig& cfg) {
    echo_effective_config(cfg, "sweep");
    RunConfig base = make_run_config(cfg);
    auto train_data = load_dataset(cfg, cfg.train_path);
    auto dev_data = load_dataset(cfg, cfg.dev_path);
    GridOutcome outcome =
        seed_sweep(base, cfg.seeds, train_data, dev_data, cfg.output_dir, cfg.jobs);
    std::size_t converged = 0;
    for (const auto& r : outcome.results) converged += r.converged ? 1 : 0;
    std::cout << outcome.results.size() << " runs (" << outcome.executed << " executed, "
              << outcome.resumed << " resumed), " << converged << " converged\n";
    return 0;
}

int cmd_eval(const CliConfig& cfg) {
    echo_effective_config(cfg, "eval");
    Checkpoint ck = load_checkpoint(resolve_data_path(cfg, cfg.checkpoint_in));
    auto meta_obj = ck.meta.find("objective");
    if (meta_obj == ck.meta.end()) {
        throw std::runtime_error("checkpoint carries no objective head");
    }
    const Objective objective = objective_from_string(meta_obj->second);
    EncoderParams encoder = ck.take_encoder();
    Vocab vocab = ck.take_vocab();

    ObjectiveHead head;
    head.objective = objective;
    const std::string prefix = "head." + meta_obj->second + ".";
    auto tensor = [&ck, &prefix](const std::string& name) {
        auto it = ck.tensors.find(prefix + name);
        if (it == ck.tensors.end()) {
            throw std::runtime_error("checkpoint: missing tensor " + prefix + name);
        }
        return it->second;
    };
    switch (objective) {
        case Objective::wg_sr: {
            WgsrHead h;
            h.w1 = tensor("w1");
            h.b1 = tensor("b1");
            h.w2 = tensor("w2");
            h.b2 = tensor("b2");
            head.wgsr = h;
            break;
        }
        case Objective::bwp: break;
        case Objective::css: {
            CssHead h;
            h.v = tensor("v");
            h.w = tensor("w");
            h.u = tensor("u");
            head.css = h;
            break;
        }
        case Objective::mas: {
            MasHead h;
            h.w1 = tensor("w1");
            h.b1 = tensor("b1");
            h.w2 = tensor("w2");
            h.b2 = tensor("b2");
            h.w3 = tensor("w3");
            h.b3 = tensor("b3");
            h.input_dim = h.b1->size();
            head.mas = h;
            break;
        }
    }

    auto data = load_dataset(cfg, cfg.dev_path);
    PreparedDataset prepared = prepare_dataset(objective, data, vocab, true);
    EvalResult result = evaluate(encoder, head, prepared);

    nlohmann::json j;
    j["objective"] = meta_obj->second;
    j["dataset"] = resolve_data_path(cfg, cfg.dev_path);
    j["accuracy"] = result.accuracy;
    j["evaluated"] = result.evaluated;
    j["excluded"] = result.excluded;
    j["ties"] = result.ties;
    const fs::path out = fs::path(cfg.output_dir) / "eval.json";
    std::ofstream(out) << j.dump(2) << "\n";
    std::cout << "accuracy " << result.accuracy << " over " << result.evaluated
              << " instances (" << result.excluded << " excluded), wrote " << out.string()
              << "\n";
    return 0;
}

int cmd_report(const CliConfig& cfg, const std::string& glob_pattern,
               const std::string& style_name, double alpha) {
    echo_effective_config(cfg, "report");
    const ReportStyle style = report_style_from_string(style_name);
    auto paths = expand_glob(glob_pattern);
    std::vector<RunResult> results;
    for (const auto& path : paths) {
        try {
            results.push_back(load_run_record(path));
        } catch (const std::exception& e) {
            std::cerr << "skipping " << path << ": " << e.what() << "\n";
        }
    }
    if (results.empty()) {
        std::cerr << "no run records match " << glob_pattern << "\n";
        return 1;
    }

    auto dataset_label = [](const RunResult& r) {
        const std::string stem = fs::path(r.config.dev_path).stem().string();
        return stem.empty() ? std::string("dev") : stem;
    };

    StatsByObjective stats;
    std::map<std::string, std::map<std::string, std::vector<double>>> converged_lists;
    std::map<std::string, std::map<std::string, std::pair<std::vector<double>, std::size_t>>>
        grouped;
    for (const auto& r : results) {
        if (r.failed) continue;
        auto& cell = grouped[objective_name(r.config.objective)][dataset_label(r)];
        ++cell.second;
        if (r.converged) {
            cell.first.push_back(r.final_dev_accuracy);
            converged_lists[dataset_label(r)][objective_name(r.config.objective)].push_back(
                r.final_dev_accuracy);
        }
    }
    for (const auto& [objective, per_dataset] : grouped) {
        for (const auto& [dataset, cell] : per_dataset) {
            stats[objective][dataset] = aggregate_values(cell.first, cell.second);
        }
    }

    RenderedReport rendered = render_report(stats, style);
    const fs::path out_dir(cfg.output_dir);
    const std::string base = style == ReportStyle::table1 ? "report_table1" : "report_table2";
    std::ofstream(out_dir / (base + ".md")) << rendered.markdown;
    std::ofstream(out_dir / (base + ".tsv")) << rendered.tsv;
    std::cout << "wrote " << (out_dir / (base + ".md")).string() << " and .tsv from "
              << results.size() << " records\n";

    if (style == ReportStyle::table1) {
        std::vector<std::pair<std::string, SignificanceTable>> tables;
        for (const auto& [dataset, lists] : converged_lists) {
            std::vector<std::pair<std::string, std::vector<double>>> groups(lists.begin(),
                                                                            lists.end());
            if (groups.size() >= 2) {
                tables.emplace_back(dataset, significance_matrix(groups, alpha));
            }
        }
        if (!tables.empty()) {
            std::ofstream(out_dir / "significance.tsv") << render_significance_tsv(tables);
            std::cout << "wrote " << (out_dir / "significance.tsv").string() << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pronoun-resolution training-objective benchmark"};
    app.require_subcommand(1);

    CliConfig cfg;
    if (const char* env = std::getenv("COREFBENCH_DATA_DIR")) cfg.data_dir = env;

    // --config is applied before flag values override individual fields
    std::string config_file;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") config_file = argv[i + 1];
    }
    if (!config_file.empty()) load_config_file(config_file, cfg);

    auto add_common = [&cfg, &config_file](CLI::App* cmd) {
        cmd->add_option("--config", config_file, "JSON config file (flags override it)");
        cmd->add_option("--data-dir", cfg.data_dir, "data root for relative paths");
        cmd->add_option("--output-dir", cfg.output_dir, "output directory");
    };
    auto add_data = [&cfg](CLI::App* cmd) {
        cmd->add_option("--train", cfg.train_path, "training JSONL file");
        cmd->add_option("--dev", cfg.dev_path, "development JSONL file");
        cmd->add_option("--format", cfg.format, "winogrande, dpr, wsc, or unified");
    };
    auto add_model = [&cfg](CLI::App* cmd) {
        cmd->add_option("--objective", cfg.objective, "wg-sr, bwp, css, or mas");
        cmd->add_option("--lr", cfg.lr, "peak learning rate");
        cmd->add_option("--epochs", cfg.epochs, "training epochs");
        cmd->add_option("--batch-size", cfg.batch_size, "minibatch size");
        cmd->add_option("--seed", cfg.seed, "base random seed");
        cmd->add_option("--preset", cfg.preset, "hyperparameter preset (table3)");
        cmd->add_option("--jobs", cfg.jobs, "parallel runs");
        cmd->add_flag("--warm-start", cfg.warm_start, "masked-LM pretraining before training");
        cmd->add_option("--warm-start-steps", cfg.warm_start_steps, "warm-start steps");
        cmd->add_option("--warm-start-lr", cfg.warm_start_lr, "warm-start peak learning rate");
        cmd->add_option("--checkpoint-in", cfg.checkpoint_in, "encoder checkpoint to load");
        cmd->add_option("--save-checkpoint", cfg.checkpoint_out, "write a model checkpoint here");
        cmd->add_option("--layers", cfg.encoder.num_layers, "encoder layers");
        cmd->add_option("--heads", cfg.encoder.num_heads, "attention heads");
        cmd->add_option("--hidden", cfg.encoder.hidden_size, "hidden size");
        cmd->add_option("--ffn", cfg.encoder.ffn_size, "feed-forward size");
        cmd->add_option("--max-len", cfg.encoder.max_seq_len, "max sequence length");
        cmd->add_option("--dropout", cfg.encoder.dropout, "dropout rate");
    };

    CLI::App* preprocess = app.add_subcommand("preprocess", "normalize and repair a dataset");
    add_common(preprocess);
    preprocess->add_option("--input", cfg.input_path, "input JSONL file")->required();
    preprocess->add_option("--format", cfg.format, "winogrande, dpr, wsc, or unified");
    preprocess->add_option("--override-file", cfg.override_file, "candidate override JSONL");

    CLI::App* train = app.add_subcommand("train", "one training run");
    add_common(train);
    add_data(train);
    add_model(train);

    CLI::App* grid = app.add_subcommand("grid", "hyperparameter grid search (3 seeds)");
    add_common(grid);
    add_data(grid);
    add_model(grid);

    CLI::App* sweep = app.add_subcommand("sweep", "seed sweep at fixed hyperparameters");
    add_common(sweep);
    add_data(sweep);
    add_model(sweep);
    sweep->add_option("--seeds", cfg.seeds, "number of consecutive seeds");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    add_common(eval);
    eval->add_option("--checkpoint", cfg.checkpoint_in, "model checkpoint")->required();
    eval->add_option("--data", cfg.dev_path, "dataset JSONL file")->required();
    eval->add_option("--format", cfg.format, "winogrande, dpr, wsc, or unified");

    std::string runs_glob = "out/*.json";
    std::string style = "table1";
    double alpha = 0.05;
    CLI::App* report = app.add_subcommand("report", "aggregate run records into tables");
    add_common(report);
    report->add_option("--runs", runs_glob, "glob of run record files")->required();
    report->add_option("--style", style, "table1 or table2");
    report->add_option("--alpha", alpha, "significance level");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(preprocess)) return cmd_preprocess(cfg);
        if (app.got_subcommand(train)) {
            apply_preset(cfg, train);
            return cmd_train(cfg);
        }
        if (app.got_subcommand(grid)) {
            apply_preset(cfg, grid);
            return cmd_grid(cfg);
        }
        if (app.got_subcommand(sweep)) {
            apply_preset(cfg, sweep);
            return cmd_sweep(cfg);
        }
        if (app.got_subcommand(eval)) return cmd_eval(cfg);
        if (app.got_subcommand(report)) return cmd_report(cfg, runs_glob, style, alpha);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
