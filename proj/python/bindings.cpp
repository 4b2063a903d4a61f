// Python bindings over the core pipeline: dataset handling, the synthetic
// corpus, tokenization, the optimizer schedule, value-level scoring helpers,
// training runs, and the seed-wise statistics.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "corefbench/objectives.hpp"
#include "corefbench/optim.hpp"
#include "corefbench/report.hpp"
#include "corefbench/schema.hpp"
#include "corefbench/stats.hpp"
#include "corefbench/synthetic.hpp"
#include "corefbench/tensor.hpp"
#include "corefbench/training.hpp"
#include "corefbench/vocab.hpp"

#include <nlohmann/json.hpp>

namespace py = pybind11;
using namespace corefbench;

namespace {

RunConfig run_config_from_kwargs(const std::string& objective, double lr, std::size_t epochs,
                                 std::size_t batch_size, std::uint64_t seed,
                                 const py::dict& encoder, bool warm_start,
                                 std::size_t warm_start_steps, double warm_start_lr,
                                 const std::string& encoder_checkpoint,
                                 const std::string& checkpoint_out) {
    RunConfig config;
    config.objective = objective_from_string(objective);
    config.learning_rate = lr;
    config.num_epochs = epochs;
    config.batch_size = batch_size;
    config.seed = seed;
    config.warm_start = warm_start;
    config.warm_start_steps = warm_start_steps;
    config.warm_start_lr = warm_start_lr;
    config.encoder_checkpoint = encoder_checkpoint;
    config.checkpoint_out = checkpoint_out;
    auto set = [&encoder](const char* key, auto& field) {
        if (encoder.contains(key)) {
            field = encoder[key].cast<std::decay_t<decltype(field)>>();
        }
    };
    set("num_layers", config.encoder.num_layers);
    set("num_heads", config.encoder.num_heads);
    set("hidden_size", config.encoder.hidden_size);
    set("ffn_size", config.encoder.ffn_size);
    set("max_seq_len", config.encoder.max_seq_len);
    set("dropout", config.encoder.dropout);
    config.validate();
    return config;
}

py::dict result_to_dict(const RunResult& result) {
    py::dict d;
    d["objective"] = objective_name(result.config.objective);
    d["learning_rate"] = result.config.learning_rate;
    d["num_epochs"] = result.config.num_epochs;
    d["batch_size"] = result.config.batch_size;
    d["seed"] = result.config.seed;
    d["epoch_dev_accuracy"] = result.epoch_dev_accuracy;
    d["final_dev_accuracy"] = result.final_dev_accuracy;
    d["converged"] = result.converged;
    d["diverged"] = result.diverged;
    d["failed"] = result.failed;
    d["error"] = result.error;
    d["wall_time_sec"] = result.wall_time_sec;
    d["train_excluded"] = result.train_excluded;
    d["dev_excluded"] = result.dev_excluded;
    return d;
}

std::vector<double> softmax_values(const std::vector<double>& x) {
    return softmax(make_tensor({x.size()}, x))->values;
}

std::vector<double> log_softmax_values(const std::vector<double>& x) {
    return log_softmax(make_tensor({x.size()}, x))->values;
}

}  // namespace

PYBIND11_MODULE(_corefbench, m) {
    m.doc() = "pronoun-resolution training-objective benchmark";
    m.attr("__version__") = "0.1.0";

    py::class_<SchemaInstance>(m, "SchemaInstance")
        .def(py::init([](std::string id, std::string text, std::string candidate1,
                         std::string candidate2, std::optional<int> answer) {
                 SchemaInstance inst{std::move(id), std::move(text), std::move(candidate1),
                                     std::move(candidate2), answer};
                 inst.validate();
                 return inst;
             }),
             py::arg("id"), py::arg("text"), py::arg("candidate1"), py::arg("candidate2"),
             py::arg("answer") = std::nullopt)
        .def_readwrite("id", &SchemaInstance::id)
        .def_readwrite("text", &SchemaInstance::text)
        .def_readwrite("candidate1", &SchemaInstance::candidate1)
        .def_readwrite("candidate2", &SchemaInstance::candidate2)
        .def_readwrite("answer", &SchemaInstance::answer)
        .def("__repr__", [](const SchemaInstance& inst) {
            return "SchemaInstance(id=" + inst.id + ")";
        });

    m.def(
        "parse_schema_file",
        [](const std::string& path, const std::string& format) {
            return parse_schema_jsonl_file(path, schema_format_from_string(format));
        },
        py::arg("path"), py::arg("format") = "unified");
    m.def("write_unified_file", &write_unified_jsonl_file, py::arg("path"),
          py::arg("instances"));
    m.def(
        "detect_candidate_mismatch",
        [](const SchemaInstance& inst) {
            MismatchReport r = detect_candidate_mismatch(inst);
            py::dict d;
            d["c1_found"] = r.c1_found;
            d["c2_found"] = r.c2_found;
            d["c1_occurrences"] = r.c1_occurrences;
            d["c2_occurrences"] = r.c2_occurrences;
            return d;
        },
        py::arg("instance"));
    m.def(
        "repair_candidate",
        [](const SchemaInstance& inst) { return repair_candidate(inst, {}); },
        py::arg("instance"));
    m.def(
        "generate_synthetic",
        [](std::size_t count, std::uint64_t seed) {
            return generate_synthetic_schemas({count, seed});
        },
        py::arg("count") = 500, py::arg("seed") = 7);

    py::class_<Vocab>(m, "Vocab")
        .def_property_readonly("size", &Vocab::size)
        .def("id_of", &Vocab::id_of)
        .def("token_of", [](const Vocab& v, std::size_t id) { return v.token_of(id); });
    m.def("build_vocab", &build_vocab, py::arg("corpus"), py::arg("min_count") = 1);
    m.def("tokenize", &tokenize, py::arg("text"), py::arg("vocab"));
    m.def("decode", &decode, py::arg("ids"), py::arg("vocab"));
    m.def("split_words", &split_words, py::arg("text"), py::arg("lowercase") = true);

    py::class_<LrSchedule>(m, "LrSchedule")
        .def(py::init(&LrSchedule::linear_warmup_decay), py::arg("base_lr"),
             py::arg("total_steps"))
        .def_readonly("base_lr", &LrSchedule::base_lr)
        .def_readonly("total_steps", &LrSchedule::total_steps)
        .def_readonly("warmup_steps", &LrSchedule::warmup_steps)
        .def("lr_at", &LrSchedule::lr_at, py::arg("step"));

    m.def("softmax", &softmax_values, py::arg("values"));
    m.def("log_softmax", &log_softmax_values, py::arg("values"));
    m.def(
        "bwp_score_pair",
        [](const std::vector<double>& vocab_log_probs, const std::vector<std::size_t>& c1,
           const std::vector<std::size_t>& c2) {
            auto lp = make_tensor({vocab_log_probs.size()}, vocab_log_probs);
            return bwp_score_pair(lp, c1, c2)->values;
        },
        py::arg("vocab_log_probs"), py::arg("c1_ids"), py::arg("c2_ids"));
    m.def(
        "max_mask",
        [](const std::vector<double>& a1, const std::vector<double>& a2) {
            auto [m1, m2] = max_mask(make_tensor({a1.size()}, a1), make_tensor({a2.size()}, a2));
            return std::make_pair(m1->values, m2->values);
        },
        py::arg("a1"), py::arg("a2"));
    m.def(
        "predict",
        [](double p1, double p2) {
            Prediction p = predict({p1, p2});
            py::dict d;
            d["index"] = p.index;
            d["tie"] = p.tie;
            return d;
        },
        py::arg("p1"), py::arg("p2"));

    m.def(
        "t_test_pooled",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            TTestResult r = t_test_pooled(a, b);
            py::dict d;
            d["t"] = r.t_statistic;
            d["df"] = r.degrees_of_freedom;
            d["p"] = r.two_tailed_p;
            d["degenerate"] = r.degenerate;
            return d;
        },
        py::arg("a"), py::arg("b"));
    m.def("regularized_incomplete_beta", &regularized_incomplete_beta, py::arg("x"),
          py::arg("a"), py::arg("b"));
    m.def(
        "aggregate",
        [](const std::vector<double>& values, std::size_t n_total) {
            SampleStats s = aggregate_values(values, n_total == 0 ? values.size() : n_total);
            py::dict d;
            d["n"] = s.n;
            d["n_total"] = s.n_total;
            d["mean"] = s.mean;
            d["std"] = s.std_dev;
            d["max"] = s.max;
            return d;
        },
        py::arg("values"), py::arg("n_total") = 0);
    m.def("is_converged", &is_converged, py::arg("dev_accuracy"));

    m.def(
        "train_run",
        [](const std::string& objective, const std::vector<SchemaInstance>& train_data,
           const std::vector<SchemaInstance>& dev_data, double lr, std::size_t epochs,
           std::size_t batch_size, std::uint64_t seed, const py::dict& encoder, bool warm_start,
           std::size_t warm_start_steps, double warm_start_lr,
           const std::string& encoder_checkpoint, const std::string& save_checkpoint) {
            RunConfig config = run_config_from_kwargs(
                objective, lr, epochs, batch_size, seed, encoder, warm_start, warm_start_steps,
                warm_start_lr, encoder_checkpoint, save_checkpoint);
            return result_to_dict(train_run(config, train_data, dev_data));
        },
        py::arg("objective"), py::arg("train_data"), py::arg("dev_data"), py::arg("lr") = 1e-5,
        py::arg("epochs") = 3, py::arg("batch_size") = 16, py::arg("seed") = 0,
        py::arg("encoder") = py::dict(), py::arg("warm_start") = false,
        py::arg("warm_start_steps") = 3000, py::arg("warm_start_lr") = 3e-4,
        py::arg("encoder_checkpoint") = "", py::arg("save_checkpoint") = "");

    m.def(
        "seed_sweep",
        [](const std::string& objective, const std::vector<SchemaInstance>& train_data,
           const std::vector<SchemaInstance>& dev_data, std::size_t n_seeds, double lr,
           std::size_t epochs, std::size_t batch_size, std::uint64_t base_seed,
           const py::dict& encoder, const std::string& output_dir, int jobs) {
            RunConfig config = run_config_from_kwargs(objective, lr, epochs, batch_size,
                                                      base_seed, encoder, false, 0, 3e-4, "", "");
            GridOutcome outcome =
                seed_sweep(config, n_seeds, train_data, dev_data, output_dir, jobs);
            py::list results;
            for (const auto& r : outcome.results) results.append(result_to_dict(r));
            return results;
        },
        py::arg("objective"), py::arg("train_data"), py::arg("dev_data"), py::arg("n_seeds"),
        py::arg("lr") = 1e-5, py::arg("epochs") = 3, py::arg("batch_size") = 16,
        py::arg("base_seed") = 0, py::arg("encoder") = py::dict(), py::arg("output_dir") = "",
        py::arg("jobs") = 1);

    m.def(
        "render_table1",
        [](const py::dict& stats_by_objective) {
            StatsByObjective stats;
            for (auto obj_item : stats_by_objective) {
                const auto objective = obj_item.first.cast<std::string>();
                for (auto ds_item : obj_item.second.cast<py::dict>()) {
                    const auto dataset = ds_item.first.cast<std::string>();
                    const auto values = ds_item.second.cast<std::vector<double>>();
                    stats[objective][dataset] = aggregate_values(values, values.size());
                }
            }
            RenderedReport report = render_report(stats, ReportStyle::table1);
            py::dict d;
            d["markdown"] = report.markdown;
            d["tsv"] = report.tsv;
            return d;
        },
        py::arg("stats_by_objective"));
}
