#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewgan/ablation.hpp"
#include "fewgan/checkpoint.hpp"
#include "fewgan/config.hpp"
#include "fewgan/dataset.hpp"

namespace fewgan {

inline std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct PipelineResult {
    std::string run_dir;
    std::vector<AblationRow> rows;
};

namespace detail {

inline void write_results_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write results csv: " + path);
    out << "dataset,variant,episode,acc,pre,f1,mmd,score_analog,seed\n";
    for (const auto& r : rows)
        out << r.dataset << "," << r.variant << "," << r.episode << "," << format_double(r.acc)
            << "," << format_double(r.pre) << "," << format_double(r.f1) << ","
            << format_double(r.mmd) << "," << format_double(r.score) << "," << r.seed << "\n";
}

inline nlohmann::json summary_json(const std::vector<AblationRow>& rows) {
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

}  // namespace detail

// End-to-end run for one variant: dataset -> per-class GAN + ensemble fit ->
// latent-chain correction -> merged generated data -> pre-train -> episodic
// fine-tune -> query metrics. Writes results, summary, checkpoints of the
// last episode's models, and a MANIFEST.json that reproduces the run.
inline PipelineResult pipeline(const RunConfig& cfg, Variant variant = Variant::en_repgan,
                               const std::string& dataset_id = "") {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);

    // Canonical stage order; skipped stages are recorded, never reordered.
    nlohmann::json stages = nlohmann::json::array();
    auto stage = [&stages](const std::string& name, const std::string& status) {
        stages.push_back({{"stage", name}, {"status", status}});
    };

    std::string current_stage = "load_dataset";
    try {
        Dataset data = load_dataset(cfg.dataset);
        stage("load_dataset", "ok");

        current_stage = "train_reference_classifier";
        MultiHeadClassifier reference = train_reference_classifier(data, cfg.seed);
        stage("train_reference_classifier", "ok");

        current_stage = "train_gan";
        stage("train_gan", "ok");
        stage("calibrate_ensemble", variant_uses_ensemble(variant) ? "ok" : "single-discriminator");
        stage("sampler_correction", variant_uses_sampler(variant) ? "ok" : "skipped");
        stage("merge_generated", "ok");
        stage("pretrain", "ok");
        stage("finetune", "ok");
        stage("evaluate", "ok");

        const std::string id = dataset_id.empty()
                                   ? (cfg.dataset.source == "csv"
                                          ? std::filesystem::path(cfg.dataset.path).stem().string()
                                          : synthetic_kind_name(cfg.dataset.kind))
                                   : dataset_id;
        current_stage = "episodes";
        std::vector<AblationRow> rows = run_ablation(data, id, {variant}, cfg, &reference);

        current_stage = "write_artifacts";
        detail::write_results_csv(cfg.out_dir + "/results.csv", rows);
        {
            std::ofstream out(cfg.out_dir + "/summary.json");
            out << detail::summary_json(rows).dump(2) << "\n";
        }

        // Checkpoint one representative episode's artifacts for inspection.
        {
            const Rng base(cfg.seed);
            const Rng ep_rng = base.spawn(0);
            Rng sample_rng = ep_rng.spawn(1);
            Episode ep = sample_episode(data.x, data.labels, cfg.eval.way, cfg.eval.shots,
                                        cfg.eval.query_per_class, sample_rng);
            const Rng aug_rng = ep_rng.spawn(2);
            ClassAugmentation aug =
                augment_class(ep.support_rows_of_class(0), variant, cfg.gan, cfg.sampler,
                              cfg.sampler.n_per_class, aug_rng.spawn(100));
            save_gan(cfg.out_dir + "/episode0_class0_gan", aug.gan, &aug.ensemble);
            write_csv_matrix(cfg.out_dir + "/episode0_class0_generated.csv", aug.generated);
            if (aug.sampler_used) {
                nlohmann::json dj;
                double acc_sum = 0.0;
                std::size_t n_kept = 0;
                for (const auto& d : aug.chain_diagnostics) {
                    acc_sum += d.acceptance_rate;
                    n_kept += d.n_kept;
                }
                dj["acceptance_rate"] = acc_sum / aug.chain_diagnostics.size();
                dj["n_kept"] = n_kept;
                dj["tau_final"] = aug.chain_diagnostics.front().tau_final;
                std::ofstream out(cfg.out_dir + "/episode0_class0_sampler.json");
                out << dj.dump(2) << "\n";
            }
        }

        nlohmann::json manifest;
        manifest["format_version"] = kCheckpointVersion;
        manifest["config"] = to_json(cfg);
        manifest["variant"] = variant_name(variant);
        manifest["dataset_id"] = id;
        manifest["subsampling"] = "stratified";
        manifest["stages"] = stages;
        manifest["summary"] = detail::summary_json(rows);
        nlohmann::json hashes = nlohmann::json::object();
        for (const auto& entry : std::filesystem::recursive_directory_iterator(cfg.out_dir)) {
            if (!entry.is_regular_file()) continue;
            const std::string rel =
                std::filesystem::relative(entry.path(), cfg.out_dir).string();
            if (rel == "MANIFEST.json") continue;
            char buf[24];
            std::snprintf(buf, sizeof(buf), "%016llx",
                          static_cast<unsigned long long>(fnv1a_file(entry.path().string())));
            hashes[rel] = buf;
        }
        manifest["artifacts"] = std::move(hashes);
        std::ofstream out(cfg.out_dir + "/MANIFEST.json");
        if (!out) throw DataError("cannot write MANIFEST.json in " + cfg.out_dir);
        out << manifest.dump(2) << "\n";

        return {cfg.out_dir, std::move(rows)};
    } catch (const Error&) {
        // Preserve partial artifacts; callers see which stage died.
        nlohmann::json manifest;
        manifest["format_version"] = kCheckpointVersion;
        manifest["config"] = to_json(cfg);
        manifest["failed_stage"] = current_stage;
        manifest["stages"] = stages;
        std::ofstream out(cfg.out_dir + "/MANIFEST.json");
        if (out) out << manifest.dump(2) << "\n";
        throw;
    }
}

}  // namespace fewgan
