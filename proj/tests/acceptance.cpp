// Acceptance suite: one check per numbered criterion, each printed as a
// single pass/fail line. Run with no arguments for all criteria or pass the
// numbers to run.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "corefbench/checkpoint.hpp"
#include "corefbench/objectives.hpp"
#include "corefbench/optim.hpp"
#include "corefbench/report.hpp"
#include "corefbench/schema.hpp"
#include "corefbench/stats.hpp"
#include "corefbench/synthetic.hpp"
#include "corefbench/training.hpp"
#include "support/fast_eval.hpp"

using namespace corefbench;

namespace {

struct Reporter {
    std::vector<std::string> failures;
    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    template <typename T>
    void require_eq(const T& got, const T& want, const std::string& what) {
        if (!(got == want)) {
            std::ostringstream os;
            os << what << " (got " << got << ", want " << want << ")";
            failures.push_back(os.str());
        }
    }
    void require_close(double got, double want, double tol, const std::string& what) {
        if (!(std::abs(got - want) <= tol)) {
            std::ostringstream os;
            os.precision(12);
            os << what << " (got " << got << ", want " << want << " +/- " << tol << ")";
            failures.push_back(os.str());
        }
    }
};

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

double elapsed_sec(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness of all four compositions at d = 64

void check_gradients(Reporter& rep) {
    SchemaInstance inst;
    inst.id = "grad";
    inst.text = "the dog bit the door as the _ fell .";
    inst.candidate1 = "dog";
    inst.candidate2 = "door";
    inst.answer = 1;
    Vocab vocab = build_vocab({inst.text}, 1);

    EncoderConfig cfg;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.hidden_size = 64;
    cfg.ffn_size = 64;
    cfg.vocab_size = vocab.size();
    cfg.max_seq_len = 16;
    cfg.dropout = 0.0;

    const auto t_start = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (Objective objective : all_objectives()) {
        std::mt19937_64 rng(101);
        EncoderParams encoder = EncoderParams::init(cfg, rng);
        ObjectiveHead head = ObjectiveHead::init(objective, cfg, rng);
        // nonzero head weights so every gradient path is live
        std::uniform_real_distribution<double> small(-0.2, 0.2);
        for (const auto& p : head.parameters())
            for (double& x : p->values) x = small(rng);

        PreparedDataset data = prepare_dataset(objective, {inst}, vocab, true);
        const int label = data.labels[0];

        // analytic gradients from the autodiff graph
        std::vector<std::pair<std::string, TensorPtr>> named = encoder.named_parameters();
        for (auto& [name, t] : head.named_parameters()) named.emplace_back("head." + name, t);
        for (auto& [name, t] : named) t->zero_grad();
        backward(objective_loss(head_forward(data, 0, encoder, head), label));

        // central differences through the staged value evaluator
        testsupport::FastObjectiveEval fast(encoder, head, data, 0);
        fast.eval_from_stage(0);  // prime every stage cache
        double head_worst = 0.0;
        std::size_t coords = 0, expected_coords = 0;
        for (auto& [name, t] : named) {
            expected_coords += t->size();
            const std::size_t stage = testsupport::entry_stage_of(name, cfg);
            std::vector<std::vector<double>> analytic{
                t->grad.empty() ? std::vector<double>(t->size(), 0.0) : t->grad};
            auto report = finite_diff_check_against(
                [&fast, stage]() { return fast.eval_from_stage(stage); }, {t}, analytic, 1e-5);
            head_worst = std::max(head_worst, report.max_rel_error);
            coords += report.coords_checked;
        }
        rep.require_eq(coords, expected_coords, objective_name(objective) + ": coordinate count");
        rep.require(head_worst < 1e-4, objective_name(objective) + ": max relative error " +
                                           std::to_string(head_worst) + " >= 1e-4");
        std::printf("    %-6s max rel err %.3e over %zu coordinates\n",
                    objective_name(objective).c_str(), head_worst, coords);
        worst = std::max(worst, head_worst);
    }
    const double sec = elapsed_sec(t_start);
    std::printf("    total gradient-check time %.1f s (budget 60)\n", sec);
    rep.require(sec < 60.0, "gradient checks took " + std::to_string(sec) + " s (budget 60)");
}

// ---------------------------------------------------------------------------
// criterion 2: probability contract over random forwards; BWP shift invariance

void check_probability_contract(Reporter& rep) {
    auto pool = generate_synthetic_schemas({.count = 64, .seed = 19});
    std::vector<std::string> corpus;
    for (const auto& inst : pool) corpus.push_back(inst.text);
    Vocab vocab = build_vocab(corpus, 1);

    EncoderConfig cfg;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.hidden_size = 16;
    cfg.ffn_size = 32;
    cfg.vocab_size = vocab.size();
    cfg.max_seq_len = 32;
    cfg.dropout = 0.0;

    std::mt19937_64 rng(23);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::uniform_real_distribution<double> spread(-1.0, 1.0);

    for (Objective objective : all_objectives()) {
        PreparedDataset data = prepare_dataset(objective, pool, vocab, true);
        EncoderParams encoder = EncoderParams::init(cfg, rng);
        ObjectiveHead head = ObjectiveHead::init(objective, cfg, rng);
        std::size_t violations = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            if (trial % 200 == 0) {
                encoder = EncoderParams::init(cfg, rng);
                head = ObjectiveHead::init(objective, cfg, rng);
                for (const auto& p : head.parameters())
                    for (double& x : p->values) x = spread(rng);
            }
            NoGradGuard guard;
            HeadOutput out = head_forward(data, pick(rng) % data.size(), encoder, head);
            const ProbPair p = out.pair();
            if (!(std::abs(p.p1 + p.p2 - 1.0) <= 1e-9) || p.p1 < 0.0 || p.p2 < 0.0) ++violations;
        }
        rep.require_eq(violations, std::size_t{0},
                       objective_name(objective) + ": probability-pair violations");
    }

    // +5 shift of every vocabulary log-probability leaves BWP unchanged
    std::uniform_real_distribution<double> lp_dist(-6.0, 0.0);
    std::uniform_int_distribution<std::size_t> id_dist(0, 19);
    double worst_shift = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> lp(20);
        for (double& x : lp) x = lp_dist(rng);
        std::vector<double> shifted = lp;
        for (double& x : shifted) x += 5.0;
        std::vector<std::size_t> c1{id_dist(rng), id_dist(rng)};
        std::vector<std::size_t> c2{id_dist(rng)};
        auto base = bwp_score_pair(make_tensor({20}, lp), c1, c2);
        auto moved = bwp_score_pair(make_tensor({20}, shifted), c1, c2);
        worst_shift = std::max({worst_shift, std::abs(base->values[0] - moved->values[0]),
                                std::abs(base->values[1] - moved->values[1])});
    }
    rep.require(worst_shift <= 1e-12,
                "BWP shift sensitivity " + std::to_string(worst_shift) + " > 1e-12");
}

// ---------------------------------------------------------------------------
// criterion 3: max-mask property suite

void check_max_mask(Reporter& rep) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::uniform_int_distribution<int> tie_coin(0, 3);
    std::size_t cover_bad = 0, tie_bad = 0, invariance_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 8;
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = dist(rng);
            b[i] = tie_coin(rng) == 0 ? a[i] : dist(rng);
        }
        auto ta = make_tensor({n}, a);
        auto tb = make_tensor({n}, b);
        auto [m1, m2] = max_mask(ta, tb);
        for (std::size_t i = 0; i < n; ++i) {
            if (m1->values[i] + m2->values[i] < 1.0) ++cover_bad;
            const bool both = m1->values[i] == 1.0 && m2->values[i] == 1.0;
            if (both != (a[i] == b[i])) ++tie_bad;
        }
        auto increasing = [trial](double x) {
            switch (trial % 3) {
                case 0: return std::exp(2.0 * x) + x;
                case 1: return x * x * x + 0.25 * x;
                default: return std::atan(4.0 * x - 2.0) + 0.01 * x;
            }
        };
        std::vector<double> fa(n), fb(n);
        for (std::size_t i = 0; i < n; ++i) {
            fa[i] = increasing(a[i]);
            fb[i] = increasing(b[i]);
        }
        auto [n1, n2] = max_mask(make_tensor({n}, fa), make_tensor({n}, fb));
        if (n1->values != m1->values || n2->values != m2->values) ++invariance_bad;
    }
    rep.require_eq(cover_bad, std::size_t{0}, "mask coverage violations");
    rep.require_eq(tie_bad, std::size_t{0}, "tie double-one violations");
    rep.require_eq(invariance_bad, std::size_t{0}, "monotone-transform invariance violations");
}

// ---------------------------------------------------------------------------
// criterion 4: learnability with the preset hyperparameters

void check_learnability(Reporter& rep) {
    auto all = generate_synthetic_schemas({.count = 500, .seed = 7});
    std::vector<SchemaInstance> train(all.begin(), all.begin() + 400);
    std::vector<SchemaInstance> dev(all.begin() + 400, all.end());

    EncoderConfig cfg;  // H = 8 gives the attention head enough probes to learn from
    cfg.num_layers = 2;
    cfg.num_heads = 8;
    cfg.hidden_size = 64;
    cfg.ffn_size = 128;
    cfg.max_seq_len = 64;
    cfg.dropout = 0.1;

    // shared masked-LM warm start, stored as a checkpoint all runs load
    const auto t_pre = std::chrono::steady_clock::now();
    std::vector<std::string> corpus;
    for (const auto& inst : train) {
        std::string filled = inst.text;
        filled.replace(filled.find('_'), 1, inst.candidate(*inst.answer));
        corpus.push_back(std::move(filled));
    }
    Vocab vocab = build_vocab(corpus, 1);
    cfg.vocab_size = vocab.size();
    std::mt19937_64 rng(1);
    EncoderParams model = EncoderParams::init(cfg, rng);
    MlmOptions mlm;
    mlm.steps = 3000;
    mlm.lr = 3e-4;
    mlm.seed = rng();
    pretrain_mlm(model, corpus, vocab, mlm);
    const double pretrain_sec = elapsed_sec(t_pre);

    TempDir dir("corefbench_acceptance_learn");
    const std::string ckpt = (dir.path / "warm.ckpt").string();
    save_checkpoint(ckpt, make_encoder_checkpoint(model, vocab));

    struct Preset {
        Objective objective;
        std::size_t epochs, batch;
    };
    for (const Preset preset : {Preset{Objective::wg_sr, 5, 16}, Preset{Objective::bwp, 8, 16},
                                Preset{Objective::css, 8, 16}, Preset{Objective::mas, 8, 8}}) {
        RunConfig config;
        config.objective = preset.objective;
        config.learning_rate = 1e-5;
        config.num_epochs = preset.epochs;
        config.batch_size = preset.batch;
        config.seed = 1;
        config.encoder = cfg;
        config.encoder_checkpoint = ckpt;
        const auto t_run = std::chrono::steady_clock::now();
        RunResult result = train_run(config, train, dev);
        const double run_sec = elapsed_sec(t_run);
        std::printf("    %-6s final dev accuracy %.3f in %zu epochs (%.0f s incl. %.0f s warm start)\n",
                    objective_name(preset.objective).c_str(), result.final_dev_accuracy,
                    config.num_epochs, run_sec + pretrain_sec, pretrain_sec);
        rep.require(result.final_dev_accuracy >= 0.90,
                    objective_name(preset.objective) + ": final dev accuracy " +
                        std::to_string(result.final_dev_accuracy) + " < 0.90");
        rep.require(run_sec + pretrain_sec < 600.0,
                    objective_name(preset.objective) + ": runtime over 10 minutes");
    }
}

// ---------------------------------------------------------------------------
// criterion 5: grid cardinality, resume, selection, sweep bookkeeping

void check_protocol_cardinality(Reporter& rep) {
    TempDir dir("corefbench_acceptance_grid");
    auto train = generate_synthetic_schemas({.count = 12, .seed = 31});
    auto dev = generate_synthetic_schemas({.count = 6, .seed = 32});

    RunConfig base;
    base.objective = Objective::css;
    base.encoder.num_layers = 1;
    base.encoder.num_heads = 1;
    base.encoder.hidden_size = 8;
    base.encoder.ffn_size = 16;
    base.encoder.max_seq_len = 32;

    const GridSpace space;  // the full default search space
    const std::vector<std::uint64_t> seeds{0, 1, 2};
    GridOutcome grid = grid_search(base, space, seeds, train, dev, dir.path.string());
    rep.require_eq(grid.results.size(), std::size_t{96}, "grid run count");
    rep.require_eq(grid.executed, std::size_t{96}, "grid executed count");

    std::size_t records = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir.path)) {
        records += entry.path().extension() == ".json" ? 1 : 0;
    }
    rep.require_eq(records, std::size_t{96}, "run records on disk");

    GridOutcome resumed = grid_search(base, space, seeds, train, dev, dir.path.string());
    rep.require_eq(resumed.resumed, std::size_t{96}, "resumed count");
    rep.require_eq(resumed.executed, std::size_t{0}, "re-executed count");

    // selection matches a hand argmax over the stored records
    double best_acc = -1.0;
    RunConfig hand;
    for (const auto& r : grid.results) {
        if (r.failed || r.diverged) continue;
        if (r.final_dev_accuracy > best_acc) {
            best_acc = r.final_dev_accuracy;
            hand = r.config;
        }
    }
    RunConfig chosen = select_best(grid.results);
    double chosen_best = -1.0;
    for (const auto& r : grid.results) {
        if (r.failed || r.diverged) continue;
        if (r.config.learning_rate == chosen.learning_rate &&
            r.config.num_epochs == chosen.num_epochs &&
            r.config.batch_size == chosen.batch_size) {
            chosen_best = std::max(chosen_best, r.final_dev_accuracy);
        }
    }
    rep.require_close(chosen_best, best_acc, 0.0, "select_best matches the hand argmax");

    RunConfig sweep_config = chosen;
    sweep_config.seed = 100;
    GridOutcome sweep = seed_sweep(sweep_config, 20, train, dev, dir.path.string());
    rep.require_eq(sweep.results.size(), std::size_t{20}, "sweep run count");
    for (const auto& r : sweep.results) {
        RunResult stored =
            load_run_record((dir.path / run_record_filename(r.config)).string());
        rep.require(stored.converged == is_converged(stored.final_dev_accuracy),
                    "stored convergence flag matches the threshold rule");
    }
}

// ---------------------------------------------------------------------------
// criterion 6: bit-identical reruns

void check_determinism(Reporter& rep) {
    auto train = generate_synthetic_schemas({.count = 12, .seed = 41});
    auto dev = generate_synthetic_schemas({.count = 6, .seed = 42});
    for (Objective objective : {Objective::css, Objective::bwp}) {
        RunConfig config;
        config.objective = objective;
        config.learning_rate = 1e-3;
        config.num_epochs = 2;
        config.batch_size = 4;
        config.seed = 5;
        config.encoder.num_layers = 1;
        config.encoder.num_heads = 1;
        config.encoder.hidden_size = 8;
        config.encoder.ffn_size = 16;
        config.encoder.max_seq_len = 32;
        RunResult a = train_run(config, train, dev);
        RunResult b = train_run(config, train, dev);
        rep.require(a.epoch_dev_accuracy == b.epoch_dev_accuracy,
                    objective_name(objective) + ": per-epoch accuracies not bit-identical");
    }
}

// ---------------------------------------------------------------------------
// criterion 7: statistics oracle equivalence

double t_two_tailed_p_trapezoid(double t, std::size_t df) {
    const double a = std::abs(t);
    const double dfd = static_cast<double>(df);
    const double log_c = std::lgamma((dfd + 1.0) / 2.0) - std::lgamma(dfd / 2.0) -
                         0.5 * std::log(dfd * M_PI);
    auto pdf = [&](double x) {
        return std::exp(log_c - (dfd + 1.0) / 2.0 * std::log1p(x * x / dfd));
    };
    const double step = 1e-4;
    double integral = 0.0;
    double prev = pdf(a);
    for (double x = a + step; x <= a + 60.0; x += step) {
        const double cur = pdf(x);
        integral += 0.5 * (prev + cur) * step;
        prev = cur;
    }
    return 2.0 * integral;
}

void check_statistics(Reporter& rep) {
    TTestResult r = t_test_pooled({1, 2, 3, 4}, {2, 3, 4, 5});
    rep.require_close(r.t_statistic, -1.095445, 1e-6, "t statistic");
    rep.require_eq(r.degrees_of_freedom, std::size_t{6}, "degrees of freedom");
    rep.require_close(r.two_tailed_p, t_two_tailed_p_trapezoid(r.t_statistic, 6), 1e-6,
                      "p vs trapezoid oracle");

    TTestResult same = t_test_pooled({0.7, 0.8, 0.9}, {0.7, 0.8, 0.9});
    rep.require(same.two_tailed_p == 1.0, "identical samples must give p = 1 exactly");

    SampleStats s = aggregate_values({1.0, 2.0, 3.0}, 3);
    rep.require(s.mean && *s.mean == 2.0, "aggregate mean");
    rep.require(s.std_dev && *s.std_dev == 1.0, "aggregate std");
    rep.require(s.max && *s.max == 3.0, "aggregate max");
}

// ---------------------------------------------------------------------------
// criterion 8: candidate repair fidelity

void check_repair(Reporter& rep) {
    SchemaInstance madonna;
    madonna.id = "wsc-madonna";
    madonna.text = "Madonna fired her trainer because _ couldn't stand her boyfriend.";
    madonna.candidate1 = "Madonna";
    madonna.candidate2 = "The trainer";
    madonna.answer = 1;

    MismatchReport before = detect_candidate_mismatch(madonna);
    rep.require(before.c1_found, "candidate1 should localize");
    rep.require(!before.c2_found, "candidate2 should fail localization");

    SchemaInstance repaired = repair_candidate(madonna, {});
    rep.require_eq(repaired.candidate2, std::string("her trainer"), "heuristic repair output");
    rep.require(!detect_candidate_mismatch(repaired).mismatch(),
                "repaired instance must pass localization");
    Vocab vocab = build_vocab({madonna.text}, 1);
    MaskedInput input = build_masked_input(repaired, vocab);
    rep.require(input.c1_span.has_value() && input.c2_span.has_value(),
                "repaired spans must localize in the masked sentence");

    const std::string clean_line =
        R"({"sentence":"John moved the couch from the garage to the backyard to create space. The _ is small.","option1":"garage","option2":"backyard","answer":"1"})";
    std::istringstream in(clean_line);
    auto instances = parse_schema_jsonl(in, SchemaFormat::winogrande);
    auto outcomes = repair_dataset(instances, {});
    rep.require_eq(outcomes[0].action, std::string("ok"), "clean instance action");
    rep.require(outcomes[0].instance.candidate1 == "garage" &&
                    outcomes[0].instance.candidate2 == "backyard",
                "clean instance untouched");
}

// ---------------------------------------------------------------------------
// criterion 9: report formatting

void check_report_format(Reporter& rep) {
    SampleStats cell;
    cell.n = 18;
    cell.n_total = 20;
    cell.mean = 0.782;
    cell.std_dev = 0.0100;
    cell.max = 0.8;
    rep.require_eq(format_percent_cell(cell), std::string("78.2 (1.00)"), "mean/std cell");
    rep.require_eq(format_converged_count(49, 96), std::string("49 out of 96"),
                   "converged count");
}

// ---------------------------------------------------------------------------
// criterion 10: schedule endpoints and continuity

void check_schedule(Reporter& rep) {
    struct Setting {
        double base;
        std::size_t total;
    };
    for (const Setting s : {Setting{1e-5, 100}, Setting{3e-4, 37}, Setting{2e-3, 1000}}) {
        LrSchedule sched = LrSchedule::linear_warmup_decay(s.base, s.total);
        rep.require(sched.lr_at(0) == 0.0, "lr(0) = 0");
        rep.require_close(sched.lr_at(sched.warmup_steps), s.base, 0.0, "lr(warmup) = base");
        rep.require(sched.lr_at(s.total) == 0.0, "lr(total) = 0");
        const double bound =
            s.base / static_cast<double>(std::min(sched.warmup_steps,
                                                  s.total - sched.warmup_steps)) +
            1e-15;
        for (std::size_t step = 0; step < s.total; ++step) {
            if (std::abs(sched.lr_at(step) - sched.lr_at(step + 1)) > bound) {
                rep.require(false, "continuity violated at step " + std::to_string(step));
                break;
            }
        }
    }
}

struct Criterion {
    int number;
    const char* name;
    std::function<void(Reporter&)> check;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "gradient correctness of the four heads through the encoder", check_gradients},
        {2, "probability contract and BWP shift invariance", check_probability_contract},
        {3, "max-mask property suite", check_max_mask},
        {4, "learnability with preset hyperparameters on the synthetic corpus",
         check_learnability},
        {5, "grid/sweep protocol cardinality, resume, and selection", check_protocol_cardinality},
        {6, "bit-identical reruns", check_determinism},
        {7, "statistics oracle equivalence", check_statistics},
        {8, "candidate repair fidelity", check_repair},
        {9, "report formatting", check_report_format},
        {10, "learning-rate schedule endpoints and continuity", check_schedule},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& criterion : criteria) {
        if (!selected.empty() && !selected.count(criterion.number)) continue;
        Reporter rep;
        try {
            criterion.check(rep);
        } catch (const std::exception& e) {
            rep.failures.push_back(std::string("exception: ") + e.what());
        }
        if (rep.failures.empty()) {
            std::printf("[PASS] criterion %d: %s\n", criterion.number, criterion.name);
        } else {
            ++failures;
            std::printf("[FAIL] criterion %d: %s\n", criterion.number, criterion.name);
            for (const auto& f : rep.failures) std::printf("       - %s\n", f.c_str());
        }
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
