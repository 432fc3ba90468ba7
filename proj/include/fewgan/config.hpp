#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewgan/dataset.hpp"
#include "fewgan/ensemble.hpp"
#include "fewgan/finetune.hpp"
#include "fewgan/gan.hpp"
#include "fewgan/sampler.hpp"

namespace fewgan {

// GAN training plus the ensemble settings layered on top of it.
struct GanSection {
    GanConfig config;
    std::size_t sub_discriminators = 5;
    bool bootstrap = true;
    CombineKind combine = CombineKind::softmax_weighted;
    double holdout_fraction = 0.2;  // real rows reserved for weight/calibration fitting
    // Extra discriminator-only steps against the frozen trained generator
    // before the sampler's density ratio is calibrated. The jointly trained
    // discriminator tracks a moving generator; refitting it against the final
    // one sharpens the ratio the chain targets. 0 disables.
    std::size_t refit_steps = 200;
};

struct SamplerSection {
    SamplerConfig config;
    bool enabled = true;
    std::size_t n_per_class = 1000;  // corrected samples per class in the pipeline
};

struct EvalSection {
    std::size_t way = 2;
    std::size_t shots = 30;
    std::size_t query_per_class = 50;
    std::size_t episodes = 20;
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "runs/out";
    std::size_t threads = 1;
    DatasetSpec dataset;
    GanSection gan;
    SamplerSection sampler;
    FinetuneConfig finetune;
    EvalSection eval;

    void validate() const {
        gan.config.validate();
        sampler.config.validate();
        finetune.validate();
        if (eval.way < 2) throw ConfigError("eval: way must be >= 2");
        if (eval.shots < 1 || eval.query_per_class < 1 || eval.episodes < 1)
            throw ConfigError("eval: shots, query_per_class and episodes must be >= 1");
        if (gan.sub_discriminators < 1) throw ConfigError("gan: sub_discriminators must be >= 1");
        if (!(gan.holdout_fraction > 0.0 && gan.holdout_fraction < 1.0))
            throw ConfigError("gan: holdout_fraction must be in (0,1)");
    }
};

// ---------------------------------------------------------------------------
// JSON mapping (machine-written manifests)

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["threads"] = c.threads;
    j["dataset"] = {{"source", c.dataset.source},
                    {"path", c.dataset.path},
                    {"label_column", c.dataset.label_column},
                    {"feature_columns", c.dataset.feature_columns},
                    {"standardize", c.dataset.standardize},
                    {"kind", synthetic_kind_name(c.dataset.kind)},
                    {"modes", c.dataset.modes},
                    {"radius", c.dataset.radius},
                    {"noise", c.dataset.noise},
                    {"n_per_class", c.dataset.n_per_class},
                    {"seed", c.dataset.seed}};
    j["gan"] = {{"mode", gan_mode_name(c.gan.config.mode)},
                {"latent_dim", c.gan.config.latent_dim},
                {"batch_size", c.gan.config.batch_size},
                {"steps", c.gan.config.steps},
                {"disc_steps", c.gan.config.disc_steps},
                {"clip", c.gan.config.clip},
                {"saturating_generator_loss", c.gan.config.saturating_generator_loss},
                {"optimizer", c.gan.config.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
                {"learning_rate", c.gan.config.optimizer.learning_rate},
                {"gen_hidden", c.gan.config.gen_hidden},
                {"disc_hidden", c.gan.config.disc_hidden},
                {"sub_discriminators", c.gan.sub_discriminators},
                {"bootstrap", c.gan.bootstrap},
                {"combine", combine_kind_name(c.gan.combine)},
                {"holdout_fraction", c.gan.holdout_fraction},
                {"refit_steps", c.gan.refit_steps}};
    j["sampler"] = {{"enabled", c.sampler.enabled},
                    {"tau", c.sampler.config.tau},
                    {"chain_length", c.sampler.config.chain_length},
                    {"burn_in", c.sampler.config.burn_in},
                    {"thinning", c.sampler.config.thinning},
                    {"n_chains", c.sampler.config.n_chains},
                    {"adapt_tau", c.sampler.config.adapt_tau},
                    {"init", c.sampler.config.init == ChainInit::prior_draw ? "prior-draw"
                                                                            : "best-of-k-prior"},
                    {"init_candidates", c.sampler.config.init_candidates},
                    {"n_per_class", c.sampler.n_per_class}};
    j["finetune"] = {{"heads", c.finetune.heads},
                     {"epochs", c.finetune.epochs},
                     {"gamma", c.finetune.gamma},
                     {"learning_rate", c.finetune.learning_rate},
                     {"head_init_seed", c.finetune.head_init_seed},
                     {"freeze_body", c.finetune.freeze_body},
                     {"pretrain_epochs", c.finetune.pretrain_epochs},
                     {"pretrain_learning_rate", c.finetune.pretrain_learning_rate}};
    j["eval"] = {{"way", c.eval.way},
                 {"shots", c.eval.shots},
                 {"query_per_class", c.eval.query_per_class},
                 {"episodes", c.eval.episodes}};
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.out_dir = j.value("out_dir", c.out_dir);
        c.threads = j.value("threads", c.threads);
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            c.dataset.source = d.value("source", c.dataset.source);
            c.dataset.path = d.value("path", c.dataset.path);
            c.dataset.label_column = d.value("label_column", c.dataset.label_column);
            c.dataset.feature_columns =
                d.value("feature_columns", c.dataset.feature_columns);
            c.dataset.standardize = d.value("standardize", c.dataset.standardize);
            if (d.contains("kind"))
                c.dataset.kind = synthetic_kind_from_name(d["kind"].get<std::string>());
            c.dataset.modes = d.value("modes", c.dataset.modes);
            c.dataset.radius = d.value("radius", c.dataset.radius);
            c.dataset.noise = d.value("noise", c.dataset.noise);
            c.dataset.n_per_class = d.value("n_per_class", c.dataset.n_per_class);
            c.dataset.seed = d.value("seed", c.dataset.seed);
        }
        if (j.contains("gan")) {
            const auto& g = j["gan"];
            if (g.contains("mode")) c.gan.config.mode = gan_mode_from_name(g["mode"]);
            c.gan.config.latent_dim = g.value("latent_dim", c.gan.config.latent_dim);
            c.gan.config.batch_size = g.value("batch_size", c.gan.config.batch_size);
            c.gan.config.steps = g.value("steps", c.gan.config.steps);
            c.gan.config.disc_steps = g.value("disc_steps", c.gan.config.disc_steps);
            c.gan.config.clip = g.value("clip", c.gan.config.clip);
            c.gan.config.saturating_generator_loss =
                g.value("saturating_generator_loss", c.gan.config.saturating_generator_loss);
            if (g.contains("optimizer"))
                c.gan.config.optimizer.kind =
                    g["optimizer"] == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
            c.gan.config.optimizer.learning_rate =
                g.value("learning_rate", c.gan.config.optimizer.learning_rate);
            c.gan.config.gen_hidden = g.value("gen_hidden", c.gan.config.gen_hidden);
            c.gan.config.disc_hidden = g.value("disc_hidden", c.gan.config.disc_hidden);
            c.gan.sub_discriminators = g.value("sub_discriminators", c.gan.sub_discriminators);
            c.gan.bootstrap = g.value("bootstrap", c.gan.bootstrap);
            if (g.contains("combine")) c.gan.combine = combine_kind_from_name(g["combine"]);
            c.gan.holdout_fraction = g.value("holdout_fraction", c.gan.holdout_fraction);
            c.gan.refit_steps = g.value("refit_steps", c.gan.refit_steps);
        }
        if (j.contains("sampler")) {
            const auto& s = j["sampler"];
            c.sampler.enabled = s.value("enabled", c.sampler.enabled);
            c.sampler.config.tau = s.value("tau", c.sampler.config.tau);
            c.sampler.config.chain_length = s.value("chain_length", c.sampler.config.chain_length);
            c.sampler.config.burn_in = s.value("burn_in", c.sampler.config.burn_in);
            c.sampler.config.thinning = s.value("thinning", c.sampler.config.thinning);
            c.sampler.config.n_chains = s.value("n_chains", c.sampler.config.n_chains);
            c.sampler.config.adapt_tau = s.value("adapt_tau", c.sampler.config.adapt_tau);
            if (s.contains("init"))
                c.sampler.config.init = s["init"] == "prior-draw" ? ChainInit::prior_draw
                                                                  : ChainInit::best_of_k_prior;
            c.sampler.config.init_candidates =
                s.value("init_candidates", c.sampler.config.init_candidates);
            c.sampler.n_per_class = s.value("n_per_class", c.sampler.n_per_class);
        }
        if (j.contains("finetune")) {
            const auto& f = j["finetune"];
            c.finetune.heads = f.value("heads", c.finetune.heads);
            c.finetune.epochs = f.value("epochs", c.finetune.epochs);
            c.finetune.gamma = f.value("gamma", c.finetune.gamma);
            c.finetune.learning_rate = f.value("learning_rate", c.finetune.learning_rate);
            c.finetune.head_init_seed = f.value("head_init_seed", c.finetune.head_init_seed);
            c.finetune.freeze_body = f.value("freeze_body", c.finetune.freeze_body);
            c.finetune.pretrain_epochs = f.value("pretrain_epochs", c.finetune.pretrain_epochs);
            c.finetune.pretrain_learning_rate =
                f.value("pretrain_learning_rate", c.finetune.pretrain_learning_rate);
        }
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            c.eval.way = e.value("way", c.eval.way);
            c.eval.shots = e.value("shots", c.eval.shots);
            c.eval.query_per_class = e.value("query_per_class", c.eval.query_per_class);
            c.eval.episodes = e.value("episodes", c.eval.episodes);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// TOML subset (human-edited configs): [section] headers and key = value lines
// with strings, booleans, numbers, and flat arrays. Covers every RunConfig
// field; nested tables are out of scope.

namespace detail {

inline std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline nlohmann::json toml_scalar(const std::string& raw, int line_no) {
    const std::string v = trim(raw);
    if (v.empty()) throw ConfigError("empty value at config line " + std::to_string(line_no));
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ConfigError("unterminated string at config line " + std::to_string(line_no));
        return v.substr(1, v.size() - 2);
    }
    if (v == "true") return true;
    if (v == "false") return false;
    try {
        std::size_t used = 0;
        if (v.find_first_of(".eE") == std::string::npos) {
            const long long i = std::stoll(v, &used);
            if (used == v.size()) return i;
        }
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("cannot parse value '" + v + "' at config line " + std::to_string(line_no));
}

}  // namespace detail

inline nlohmann::json parse_toml_subset(std::istream& in) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* section = &root;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // strip comments outside strings
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line = line.substr(0, i);
                break;
            }
        }
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("malformed section header at line " + std::to_string(line_no));
            const std::string name = detail::trim(t.substr(1, t.size() - 2));
            section = &root[name];
            if (section->is_null()) *section = nlohmann::json::object();
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at config line " + std::to_string(line_no));
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']')
                throw ConfigError("unterminated array at config line " + std::to_string(line_no));
            nlohmann::json arr = nlohmann::json::array();
            std::stringstream items(value.substr(1, value.size() - 2));
            std::string item;
            while (std::getline(items, item, ','))
                if (!detail::trim(item).empty()) arr.push_back(detail::toml_scalar(item, line_no));
            (*section)[key] = std::move(arr);
        } else {
            (*section)[key] = detail::toml_scalar(value, line_no);
        }
    }
    return root;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed json config " + path + ": " + e.what());
        }
    } else {
        j = parse_toml_subset(in);
    }
    RunConfig c = run_config_from_json(j);
    c.validate();
    return c;
}

}  // namespace fewgan
