// fewgan command-line interface: GAN training, latent-chain correction,
// classifier fine-tuning, episodic evaluation, and the four-way ablation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fewgan/fewgan.hpp"

using namespace fewgan;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t threads = 0;
};

RunConfig resolve_config(const CommonFlags& flags) {
    RunConfig cfg;
    if (!flags.config_path.empty()) cfg = load_run_config(flags.config_path);
    if (flags.seed_set) cfg.seed = flags.seed;
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (flags.threads > 0) cfg.threads = flags.threads;
    if (cfg.dataset.seed == 0) cfg.dataset.seed = splitmix64(cfg.seed ^ 0xda7a);
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "run configuration (.toml or .json)");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--seed", flags.seed, "global seed override")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--threads", flags.threads, "worker threads for episodes/chains");
}

void write_rows_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "dataset,variant,episode,acc,pre,f1,mmd,score_analog,seed\n";
    for (const auto& r : rows)
        out << r.dataset << "," << r.variant << "," << r.episode << "," << format_double(r.acc)
            << "," << format_double(r.pre) << "," << format_double(r.f1) << ","
            << format_double(r.mmd) << "," << format_double(r.score) << "," << r.seed << "\n";
}

void print_summary(const std::vector<AblationRow>& rows) {
    std::map<std::string, std::vector<const AblationRow*>> by_variant;
    for (const auto& r : rows) by_variant[r.variant].push_back(&r);
    std::printf("%-12s %8s %8s %8s %10s %10s\n", "variant", "acc", "pre", "f1", "mmd", "score");
    for (const auto& [variant, vr] : by_variant) {
        auto stat = [&](auto getter) {
            std::vector<double> v;
            for (const auto* r : vr) v.push_back(getter(*r));
            return summarize(v);
        };
        const SummaryStat acc = stat([](const AblationRow& r) { return r.acc; });
        const SummaryStat pre = stat([](const AblationRow& r) { return r.pre; });
        const SummaryStat f1 = stat([](const AblationRow& r) { return r.f1; });
        const SummaryStat mmd = stat([](const AblationRow& r) { return r.mmd; });
        const SummaryStat score = stat([](const AblationRow& r) { return r.score; });
        std::printf("%-12s %8.4f %8.4f %8.4f %10.5f %10.4f\n", variant.c_str(), acc.mean, pre.mean,
                    f1.mean, mmd.mean, score.mean);
    }
}

nlohmann::json summary_to_json(const std::vector<AblationRow>& rows) {
    std::map<std::string, std::map<std::string, std::vector<double>>> by_variant;
    for (const auto& r : rows) {
        by_variant[r.variant]["acc"].push_back(r.acc);
        by_variant[r.variant]["pre"].push_back(r.pre);
        by_variant[r.variant]["f1"].push_back(r.f1);
        by_variant[r.variant]["mmd"].push_back(r.mmd);
        by_variant[r.variant]["score_analog"].push_back(r.score);
    }
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [variant, metrics] : by_variant) {
        nlohmann::json vj;
        for (const auto& [metric, values] : metrics) {
            const SummaryStat s = summarize(values);
            vj[metric] = {{"mean", s.mean}, {"std", s.stddev}, {"n", values.size()}};
        }
        j[variant] = std::move(vj);
    }
    return j;
}

std::string dataset_id_of(const RunConfig& cfg) {
    return cfg.dataset.source == "csv" ? std::filesystem::path(cfg.dataset.path).stem().string()
                                       : synthetic_kind_name(cfg.dataset.kind);
}

int cmd_train_gan(const CommonFlags& flags, const std::string& variant_name_str) {
    RunConfig cfg = resolve_config(flags);
    const Variant variant = variant_from_name(variant_name_str);
    Dataset data = load_dataset(cfg.dataset);
    std::filesystem::create_directories(cfg.out_dir);

    const Rng base(cfg.seed);
    for (std::size_t c = 0; c < data.n_classes(); ++c) {
        Matrix rows = data.rows_of_class(static_cast<int>(c));
        if (rows.rows() < 2) throw DataError("class " + data.class_names[c] + " has < 2 rows");
        const Rng class_rng = base.spawn(100 + c);
        Rng split_rng = class_rng.spawn(11);
        HoldoutSplit split = split_holdout(rows, cfg.gan.holdout_fraction, split_rng);
        const std::size_t t = variant_uses_ensemble(variant) ? cfg.gan.sub_discriminators : 1;
        Rng train_rng = class_rng.spawn(12);
        TrainedGan gan = train_gan(split.train, cfg.gan.config, t,
                                   variant_uses_ensemble(variant) && cfg.gan.bootstrap, train_rng);
        Rng fit_rng = class_rng.spawn(13);
        EnsembleDiscriminator ens = fit_ensemble(gan, cfg.gan.combine, split.holdout, fit_rng);
        const std::string dir = cfg.out_dir + "/class_" + data.class_names[c];
        save_gan(dir, gan, &ens);
        std::printf("trained class %-12s T=%zu  final d_loss %.4f g_loss %.4f -> %s\n",
                    data.class_names[c].c_str(), t, gan.loss_history.back().d_loss,
                    gan.loss_history.back().g_loss, dir.c_str());
    }
    return 0;
}

int cmd_correct(const CommonFlags& flags, const std::string& gan_dir, std::size_t n_samples) {
    RunConfig cfg = resolve_config(flags);
    LoadedGan loaded = load_gan(gan_dir);
    if (!loaded.has_ensemble)
        throw LoadError("gan directory has no fitted ensemble; run train-gan first");

    SamplerConfig sc = cfg.sampler.config;
    sc.seed = cfg.seed;
    sc.threads = cfg.threads;
    if (n_samples > 0) {
        const std::size_t per_chain = (n_samples + sc.n_chains - 1) / sc.n_chains;
        sc.burn_in = sc.effective_burn_in();
        sc.chain_length = sc.burn_in + per_chain * sc.thinning;
    }
    SamplerOutput out = run_chain(loaded.gan, loaded.ensemble, sc);
    if (n_samples > 0 && out.samples.rows() > n_samples) {
        Matrix trimmed(n_samples, out.samples.cols());
        for (std::size_t i = 0; i < n_samples; ++i)
            for (std::size_t c = 0; c < out.samples.cols(); ++c)
                trimmed(i, c) = out.samples(i, c);
        out.samples = std::move(trimmed);
    }

    std::filesystem::create_directories(cfg.out_dir);
    write_csv_matrix(cfg.out_dir + "/samples.csv", out.samples);
    nlohmann::json dj;
    dj["acceptance_rate"] = out.overall_acceptance();
    const std::size_t kept = out.samples.rows();
    bool low = false;
    for (const auto& d : out.diagnostics) low = low || d.low_acceptance;
    dj["n_kept"] = kept;
    dj["tau_final"] = out.diagnostics.front().tau_final;
    dj["low_acceptance"] = low;
    std::ofstream dout(cfg.out_dir + "/diagnostics.json");
    dout << dj.dump(2) << "\n";
    if (low) std::fprintf(stderr, "warning: acceptance rate below 1%%\n");
    std::printf("kept %zu samples, acceptance %.3f -> %s/samples.csv\n", kept,
                out.overall_acceptance(), cfg.out_dir.c_str());
    return 0;
}

Dataset load_labeled_csv(const std::string& path, const std::string& label_column) {
    DatasetSpec spec;
    spec.source = "csv";
    spec.path = path;
    spec.label_column = label_column;
    spec.standardize = false;
    return load_dataset(spec);
}

int cmd_finetune(const CommonFlags& flags, const std::string& train_csv,
                 const std::string& support_csv, const std::string& label_column) {
    RunConfig cfg = resolve_config(flags);
    Dataset train = load_labeled_csv(train_csv, label_column);
    Dataset support = load_labeled_csv(support_csv, label_column);
    if (train.n_classes() != support.n_classes())
        throw DataError("training and support files disagree on the class set");

    BodySpec body;
    Rng pre_rng = Rng(cfg.seed).spawn(1);
    MultiHeadClassifier pre =
        pretrain(train.x, train.labels, body, cfg.finetune, train.n_classes(), pre_rng);
    MultiHeadClassifier tuned = finetune(pre, support.x, support.labels, cfg.finetune);

    std::filesystem::create_directories(cfg.out_dir);
    save_classifier(cfg.out_dir + "/classifier.json", tuned, cfg.finetune);
    Prediction p = predict(tuned, support.x);
    MetricsReport m = compute_metrics(p.labels, support.labels);
    std::printf("support accuracy %.4f -> %s/classifier.json\n", m.acc, cfg.out_dir.c_str());
    return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& baseline_str, std::size_t way,
                 std::size_t shots, std::size_t episodes) {
    RunConfig cfg = resolve_config(flags);
    if (way > 0) cfg.eval.way = way;
    if (shots > 0) cfg.eval.shots = shots;
    if (episodes > 0) cfg.eval.episodes = episodes;
    cfg.validate();
    const BaselineKind baseline = baseline_from_name(baseline_str);

    Dataset data = load_dataset(cfg.dataset);
    MultiHeadClassifier reference = train_reference_classifier(data, cfg.seed);
    std::vector<AblationRow> rows =
        run_baseline_eval(data, dataset_id_of(cfg), baseline, cfg, &reference);

    std::filesystem::create_directories(cfg.out_dir);
    write_rows_csv(cfg.out_dir + "/results.csv", rows);
    std::ofstream sj(cfg.out_dir + "/summary.json");
    sj << summary_to_json(rows).dump(2) << "\n";
    print_summary(rows);
    return 0;
}

int cmd_pipeline(const CommonFlags& flags, const std::string& variant_str, std::size_t way,
                 std::size_t shots, std::size_t episodes) {
    RunConfig cfg = resolve_config(flags);
    if (way > 0) cfg.eval.way = way;
    if (shots > 0) cfg.eval.shots = shots;
    if (episodes > 0) cfg.eval.episodes = episodes;
    cfg.validate();
    PipelineResult result = pipeline(cfg, variant_from_name(variant_str));
    print_summary(result.rows);
    std::printf("run directory: %s\n", result.run_dir.c_str());
    return 0;
}

int cmd_ablation(const CommonFlags& flags, const std::string& variant_str, std::size_t way,
                 std::size_t shots, std::size_t episodes) {
    RunConfig cfg = resolve_config(flags);
    if (way > 0) cfg.eval.way = way;
    if (shots > 0) cfg.eval.shots = shots;
    if (episodes > 0) cfg.eval.episodes = episodes;
    cfg.validate();

    std::vector<Variant> variants =
        variant_str.empty() ? all_variants() : std::vector<Variant>{variant_from_name(variant_str)};
    Dataset data = load_dataset(cfg.dataset);
    MultiHeadClassifier reference = train_reference_classifier(data, cfg.seed);
    std::vector<AblationRow> rows =
        run_ablation(data, dataset_id_of(cfg), variants, cfg, &reference);

    std::filesystem::create_directories(cfg.out_dir);
    write_rows_csv(cfg.out_dir + "/results.csv", rows);
    std::ofstream sj(cfg.out_dir + "/summary.json");
    sj << summary_to_json(rows).dump(2) << "\n";
    print_summary(rows);
    return 0;
}

int cmd_gradcheck() {
    Rng rng(2024);
    struct Row {
        std::string name;
        double err;
    };
    std::vector<Row> table;

    auto run_case = [&](const std::string& name,
                        const std::function<Tape::NodeId(Tape&, Tape::NodeId)>& build, double lo,
                        double hi, int reps = 100) {
        double worst = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            Matrix x = rng.uniform_matrix(2, 4, lo, hi);
            auto f = [&](const Matrix& p, Matrix* grad_out) {
                Tape tape;
                Tape::NodeId in = tape.leaf(p);
                Tape::NodeId root = build(tape, in);
                if (grad_out) {
                    tape.backward(root);
                    *grad_out = tape.grad(in);
                }
                return tape.scalar(root);
            };
            worst = std::max(worst, grad_check(f, x, 1e-5));
        }
        table.push_back({name, worst});
    };

    run_case("tanh", [](Tape& t, Tape::NodeId x) { return t.reduce_sum(t.tanh(x)); }, -2, 2);
    run_case("sigmoid", [](Tape& t, Tape::NodeId x) { return t.reduce_sum(t.sigmoid(x)); }, -2, 2);
    run_case("relu", [](Tape& t, Tape::NodeId x) { return t.reduce_sum(t.relu(x)); }, 0.2, 2);
    run_case("exp", [](Tape& t, Tape::NodeId x) { return t.reduce_sum(t.exp(x)); }, -1, 1);
    run_case("square", [](Tape& t, Tape::NodeId x) { return t.reduce_sum(t.square(x)); }, -2, 2);
    run_case("log", [](Tape& t, Tape::NodeId x) { return t.reduce_sum(t.log_guarded(x)); }, 0.1, 2);
    run_case("softmax", [](Tape& t, Tape::NodeId x) {
        return t.reduce_sum(t.square(t.row_softmax(x)));
    }, -2, 2);
    run_case("matmul+bias", [](Tape& t, Tape::NodeId x) {
        static const Matrix w = Rng(7).uniform_matrix(4, 3, -1, 1);
        static const Matrix b = Rng(8).uniform_matrix(1, 3, -1, 1);
        return t.reduce_sum(t.tanh(t.broadcast_add_row(t.matmul(x, t.leaf(w)), t.leaf(b))));
    }, -2, 2);

    // composed latent-target path through generator and calibrated ensemble
    {
        GanConfig gcfg;
        gcfg.steps = 30;
        gcfg.batch_size = 16;
        gcfg.latent_dim = 4;
        gcfg.gen_hidden = {8};
        gcfg.disc_hidden = {8};
        Rng train_rng(5);
        Matrix data = train_rng.normal_matrix(48, 2);
        TrainedGan gan = train_gan(data, gcfg, 3, true, train_rng);
        EnsembleDiscriminator ens;
        ens.sub_discriminators = gan.sub_discriminators;
        ens.rule = CombineRule::uniform(CombineKind::softmax_weighted, 3);
        ens.calibration = Calibration{1.2, 0.1};
        GanLatentTarget target(gan.generator, ens, gan.prior());
        double worst = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            Matrix z = rng.normal_matrix(1, 4);
            auto f = [&](const Matrix& p, Matrix* g) { return target.log_density(p, g); };
            worst = std::max(worst, grad_check(f, z, 1e-5));
        }
        table.push_back({"latent log-target", worst});
    }

    bool ok = true;
    std::printf("%-20s %12s\n", "operation", "max rel err");
    for (const auto& row : table) {
        std::printf("%-20s %12.3e %s\n", row.name.c_str(), row.err,
                    row.err <= 1e-5 ? "" : "FAIL");
        ok = ok && row.err <= 1e-5;
    }
    return ok ? 0 : 1;
}

int cmd_report(const std::string& results_csv, const std::string& out_json) {
    std::ifstream in(results_csv);
    if (!in) throw DataError("cannot open results csv: " + results_csv);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty results csv");
    std::vector<AblationRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw DataError("malformed results row: " + line);
        AblationRow r;
        r.dataset = cells[0];
        r.variant = cells[1];
        r.episode = std::stoul(cells[2]);
        r.acc = std::stod(cells[3]);
        r.pre = std::stod(cells[4]);
        r.f1 = std::stod(cells[5]);
        r.mmd = std::stod(cells[6]);
        r.score = std::stod(cells[7]);
        r.seed = std::stoull(cells[8]);
        rows.push_back(std::move(r));
    }
    print_summary(rows);
    if (!out_json.empty()) {
        std::ofstream out(out_json);
        out << summary_to_json(rows).dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot learning with ensemble-GAN augmentation, latent-chain correction, "
                 "and multi-head fine-tuning"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string variant = "en_repgan";
    std::string baseline = "none";
    std::string gan_dir, train_csv, support_csv, results_csv, out_json;
    std::string label_column = "label";
    std::size_t way = 0, shots = 0, episodes = 0, n_samples = 0;

    CLI::App* train = app.add_subcommand("train-gan", "train per-class GANs and fit ensembles");
    add_common(train, flags);
    train->add_option("--variant", variant, "gan|repgan|en_gan|en_repgan");

    CLI::App* correct = app.add_subcommand("correct", "correct a trained generator by MCMC");
    add_common(correct, flags);
    correct->add_option("--gan", gan_dir, "gan checkpoint directory")->required();
    correct->add_option("--samples", n_samples, "number of corrected samples to keep");

    CLI::App* ft =
        app.add_subcommand("finetune", "pre-train on generated data, fine-tune on support");
    add_common(ft, flags);
    ft->add_option("--train-csv", train_csv, "labeled pre-training data")->required();
    ft->add_option("--support-csv", support_csv, "labeled few-shot support set")->required();
    ft->add_option("--label-column", label_column, "label column name (default: label)");

    CLI::App* ev = app.add_subcommand("evaluate", "episodic evaluation of oversampling baselines");
    add_common(ev, flags);
    ev->add_option("--baseline", baseline, "none|ros|smote");
    ev->add_option("--way", way, "classes per episode");
    ev->add_option("--shots", shots, "support rows per class");
    ev->add_option("--episodes", episodes, "episode count");

    CLI::App* pipe = app.add_subcommand(
        "pipeline", "full per-class GAN -> correction -> fine-tune -> metrics run");
    add_common(pipe, flags);
    pipe->add_option("--variant", variant, "gan|repgan|en_gan|en_repgan");
    pipe->add_option("--way", way, "classes per episode");
    pipe->add_option("--shots", shots, "support rows per class");
    pipe->add_option("--episodes", episodes, "episode count");

    CLI::App* abl = app.add_subcommand("ablation", "run the GAN/REPGAN/En_GAN/En_REPGAN grid");
    add_common(abl, flags);
    std::string abl_variant;
    abl->add_option("--variant", abl_variant, "restrict to one variant");
    abl->add_option("--way", way, "classes per episode");
    abl->add_option("--shots", shots, "support rows per class");
    abl->add_option("--episodes", episodes, "episode count");

    CLI::App* gc = app.add_subcommand(
        "gradcheck", "verify gradients of every primitive and the composed latent target");

    CLI::App* rep = app.add_subcommand("report", "summarize a results csv");
    rep->add_option("--results", results_csv, "results.csv from evaluate/pipeline/ablation")
        ->required();
    rep->add_option("--out", out_json, "write summary json here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train_gan(flags, variant);
        if (correct->parsed()) return cmd_correct(flags, gan_dir, n_samples);
        if (ft->parsed()) return cmd_finetune(flags, train_csv, support_csv, label_column);
        if (ev->parsed()) return cmd_evaluate(flags, baseline, way, shots, episodes);
        if (pipe->parsed()) return cmd_pipeline(flags, variant, way, shots, episodes);
        if (abl->parsed()) return cmd_ablation(flags, abl_variant, way, shots, episodes);
        if (gc->parsed()) return cmd_gradcheck();
        if (rep->parsed()) return cmd_report(results_csv, out_json);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const TrainingDivergedError& e) {
        std::fprintf(stderr, "training diverged: %s\n", e.what());
        return 4;
    } catch (const SamplerError& e) {
        std::fprintf(stderr, "sampler error: %s\n", e.what());
        return 5;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const LoadError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const EpisodeError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
