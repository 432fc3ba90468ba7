#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewgan/dataset.hpp"
#include "fewgan/ensemble.hpp"
#include "fewgan/finetune.hpp"
#include "fewgan/gan.hpp"
#include "fewgan/matrix.hpp"

namespace fewgan {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) throw LoadError("checkpoint: malformed matrix");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const auto& row : j) {
        if (row.size() != cols) throw LoadError("checkpoint: ragged matrix");
        for (const auto& v : row) data.push_back(v.get<double>());
    }
    return Matrix::checked(rows, cols, std::move(data));
}

inline nlohmann::json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open checkpoint: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed checkpoint " + path + ": " + e.what());
    }
}

inline void check_version(const nlohmann::json& j, const std::string& path) {
    if (!j.contains("format_version") || !j["format_version"].is_number_integer() ||
        j["format_version"].get<int>() != kCheckpointVersion)
        throw LoadError("unsupported format_version in " + path);
}

}  // namespace detail

inline nlohmann::json model_to_json(const MlpModel& m) {
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["input_dim"] = m.input_dim();
    j["output_dim"] = m.output_dim();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.layers) {
        nlohmann::json lj;
        lj["activation"] = activation_name(l.act);
        lj["weight"] = detail::matrix_to_json(l.weight);
        lj["bias"] = detail::matrix_to_json(l.bias);
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j;
}

inline MlpModel model_from_json(const nlohmann::json& j, const std::string& where) {
    detail::check_version(j, where);
    MlpModel m;
    try {
        for (const auto& lj : j.at("layers")) {
            MlpModel::Layer l;
            l.act = activation_from_name(lj.at("activation").get<std::string>());
            l.weight = detail::matrix_from_json(lj.at("weight"));
            l.bias = detail::matrix_from_json(lj.at("bias"));
            if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols())
                throw LoadError("checkpoint: bias/weight shape mismatch in " + where);
            if (!m.layers.empty() && m.layers.back().weight.cols() != l.weight.rows())
                throw LoadError("checkpoint: layer dims do not chain in " + where);
            m.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed model checkpoint " + where + ": " + e.what());
    }
    if (m.layers.empty()) throw LoadError("checkpoint has no layers: " + where);
    return m;
}

inline void save_model(const std::string& path, const MlpModel& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << model_to_json(m).dump(2) << "\n";
}

inline MlpModel load_model(const std::string& path) {
    return model_from_json(detail::parse_file(path), path);
}

// TrainedGan persists as a directory: gan.json manifest (config, combine rule,
// calibration), one checkpoint per network, loss history CSV.
inline void save_gan(const std::string& dir, const TrainedGan& gan,
                     const EnsembleDiscriminator* ensemble = nullptr) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["mode"] = gan_mode_name(gan.config.mode);
    j["data_dim"] = gan.data_dim;
    j["config"] = {{"latent_dim", gan.config.latent_dim},
                   {"batch_size", gan.config.batch_size},
                   {"steps", gan.config.steps},
                   {"disc_steps", gan.config.disc_steps},
                   {"clip", gan.config.clip},
                   {"seed", gan.config.seed},
                   {"saturating_generator_loss", gan.config.saturating_generator_loss}};
    j["generator"] = "generator.json";
    nlohmann::json subs = nlohmann::json::array();
    for (std::size_t t = 0; t < gan.sub_discriminators.size(); ++t) {
        const std::string name = "sub_discriminator_" + std::to_string(t) + ".json";
        save_model(dir + "/" + name, gan.sub_discriminators[t]);
        subs.push_back(name);
    }
    j["sub_discriminators"] = std::move(subs);
    if (ensemble) {
        j["combine_kind"] = combine_kind_name(ensemble->rule.kind);
        j["weights"] = ensemble->rule.weights;
        j["cal_a"] = ensemble->calibration.a;
        j["cal_b"] = ensemble->calibration.b;
    }
    j["loss_history"] = "losses.csv";
    save_model(dir + "/generator.json", gan.generator);

    std::ofstream losses(dir + "/losses.csv");
    losses << "step,d_loss,g_loss\n";
    for (const auto& r : gan.loss_history)
        losses << r.step << "," << format_double(r.d_loss) << "," << format_double(r.g_loss)
               << "\n";

    std::ofstream out(dir + "/gan.json");
    if (!out) throw DataError("cannot write gan manifest in " + dir);
    out << j.dump(2) << "\n";
}

struct LoadedGan {
    TrainedGan gan;
    EnsembleDiscriminator ensemble;
    bool has_ensemble = false;
};

inline LoadedGan load_gan(const std::string& dir) {
    const nlohmann::json j = detail::parse_file(dir + "/gan.json");
    detail::check_version(j, dir + "/gan.json");
    LoadedGan out;
    try {
        out.gan.config.mode = gan_mode_from_name(j.at("mode").get<std::string>());
        out.gan.data_dim = j.at("data_dim").get<std::size_t>();
        const auto& cfg = j.at("config");
        out.gan.config.latent_dim = cfg.at("latent_dim").get<std::size_t>();
        out.gan.config.batch_size = cfg.at("batch_size").get<std::size_t>();
        out.gan.config.steps = cfg.at("steps").get<std::size_t>();
        out.gan.config.disc_steps = cfg.at("disc_steps").get<std::size_t>();
        out.gan.config.clip = cfg.at("clip").get<double>();
        out.gan.config.seed = cfg.at("seed").get<std::uint64_t>();
        out.gan.generator = load_model(dir + "/" + j.at("generator").get<std::string>());
        for (const auto& name : j.at("sub_discriminators"))
            out.gan.sub_discriminators.push_back(load_model(dir + "/" + name.get<std::string>()));
        if (j.contains("combine_kind")) {
            out.has_ensemble = true;
            out.ensemble.sub_discriminators = out.gan.sub_discriminators;
            out.ensemble.rule.kind = combine_kind_from_name(j.at("combine_kind").get<std::string>());
            out.ensemble.rule.weights = j.at("weights").get<std::vector<double>>();
            out.ensemble.calibration.a = j.at("cal_a").get<double>();
            out.ensemble.calibration.b = j.at("cal_b").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed gan manifest in " + dir + ": " + e.what());
    }
    return out;
}

inline void save_classifier(const std::string& path, const MultiHeadClassifier& m,
                            const FinetuneConfig& config) {
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["n_classes"] = m.n_classes;
    j["body"] = model_to_json(m.body);
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : m.heads)
        heads.push_back({{"weight", detail::matrix_to_json(h.weight)},
                         {"bias", detail::matrix_to_json(h.bias)}});
    j["heads"] = std::move(heads);
    j["config"] = {{"heads", config.heads},         {"epochs", config.epochs},
                   {"gamma", config.gamma},         {"learning_rate", config.learning_rate},
                   {"head_init_seed", config.head_init_seed},
                   {"freeze_body", config.freeze_body}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write classifier checkpoint: " + path);
    out << j.dump(2) << "\n";
}

inline MultiHeadClassifier load_classifier(const std::string& path) {
    const nlohmann::json j = detail::parse_file(path);
    detail::check_version(j, path);
    MultiHeadClassifier m;
    try {
        m.n_classes = j.at("n_classes").get<std::size_t>();
        m.body = model_from_json(j.at("body"), path);
        for (const auto& h : j.at("heads")) {
            MultiHeadClassifier::Head head;
            head.weight = detail::matrix_from_json(h.at("weight"));
            head.bias = detail::matrix_from_json(h.at("bias"));
            m.heads.push_back(std::move(head));
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed classifier checkpoint " + path + ": " + e.what());
    }
    if (m.heads.empty()) throw LoadError("classifier checkpoint has no heads: " + path);
    return m;
}

}  // namespace fewgan
