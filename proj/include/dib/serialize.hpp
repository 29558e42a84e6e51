#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dib/boosting.hpp"
#include "dib/surgery.hpp"

namespace dib {

using json = nlohmann::json;

// ---- JSON forms of the structural types (configs and model metadata) ----

inline json layer_to_json(const LayerSpec& l) {
    json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Dense:
            j["width"] = l.width;
            break;
        case LayerKind::Conv2d:
            j["channels"] = l.channels;
            j["kernel"] = {l.kh, l.kw};
            j["stride"] = l.stride;
            break;
        case LayerKind::MaxPool2d:
            j["window"] = {l.ph, l.pw};
            break;
        case LayerKind::Dropout:
            j["p"] = l.drop_p;
            break;
        default:
            break;
    }
    return j;
}

inline LayerSpec layer_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense") return LayerSpec::dense(j.at("width").get<Index>());
    if (kind == "conv2d") {
        const auto kernel = j.at("kernel");
        return LayerSpec::conv2d(j.at("channels").get<Index>(), kernel.at(0).get<Index>(),
                                 kernel.at(1).get<Index>(), j.value("stride", Index(1)));
    }
    if (kind == "maxpool2d") {
        const auto w = j.at("window");
        return LayerSpec::maxpool2d(w.at(0).get<Index>(), w.at(1).get<Index>());
    }
    if (kind == "dropout") return LayerSpec::dropout(j.at("p").get<double>());
    if (kind == "softmax") return LayerSpec::softmax();
    if (kind == "flatten") return LayerSpec::flatten();
    if (kind == "relu") return LayerSpec::relu();
    throw ConfigError("unknown layer kind '" + kind + "'");
}

inline json spec_to_json(const NetworkSpec& spec) {
    json j;
    j["input"] = spec.input_shape;
    j["layers"] = json::array();
    for (const auto& l : spec.layers) j["layers"].push_back(layer_to_json(l));
    return j;
}

inline NetworkSpec spec_from_json(const json& j) {
    NetworkSpec spec;
    spec.input_shape = j.at("input").get<Shape>();
    for (const auto& l : j.at("layers")) spec.layers.push_back(layer_from_json(l));
    return spec;
}

inline json growth_to_json(const GrowthPolicy& p) {
    json j;
    j["position"] = p.position;
    j["block"] = json::array();
    for (const auto& l : p.block) j["block"].push_back(layer_to_json(l));
    if (p.max_insertions) j["max_insertions"] = *p.max_insertions;
    j["copy_above"] = p.copy_above;
    return j;
}

inline GrowthPolicy growth_from_json(const json& j) {
    GrowthPolicy p;
    p.position = j.at("position").get<Index>();
    if (j.contains("block")) {
        for (const auto& l : j.at("block")) p.block.push_back(layer_from_json(l));
    } else if (j.contains("layer")) {
        p.block.push_back(layer_from_json(j.at("layer"))); // single-layer shorthand
    }
    if (j.contains("max_insertions") && !j.at("max_insertions").is_null())
        p.max_insertions = j.at("max_insertions").get<int>();
    p.copy_above = j.value("copy_above", true);
    return p;
}

inline json train_to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},       {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
                {"beta2", c.beta2},         {"epsilon", c.epsilon},
                {"seed", c.seed},           {"deterministic", c.deterministic}};
}

inline TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    c.deterministic = j.value("deterministic", c.deterministic);
    return c;
}

// ---- Binary ensemble files ----
//
// Little-endian container: magic "DIBM", format version, the originating
// config (JSON), then per round the vote bookkeeping, the member spec (JSON)
// and the raw parameter tensors. Wall-clock times never enter the file, so
// deterministic runs produce byte-identical models.

inline constexpr char kModelMagic[4] = {'D', 'I', 'B', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ModelIoError(ModelIoError::Kind::Truncated,
                                std::string("model file truncated reading ") + what);
    return v;
}

inline void write_blob(std::ostream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint64_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_blob(std::istream& in, const char* what) {
    const auto len = read_pod<std::uint64_t>(in, what);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw ModelIoError(ModelIoError::Kind::Truncated,
                                std::string("model file truncated reading ") + what);
    return s;
}

template <typename Scalar>
void write_tensor(std::ostream& out, const Tensor<Scalar>& t) {
    write_pod(out, static_cast<std::uint64_t>(t.size()));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(t.size())));
}

template <typename Scalar>
void read_tensor_into(std::istream& in, Tensor<Scalar>& t, const char* what) {
    const auto len = read_pod<std::uint64_t>(in, what);
    if (len != static_cast<std::uint64_t>(t.size()))
        throw ModelIoError(ModelIoError::Kind::Invalid,
                           std::string(what) + ": parameter length " + std::to_string(len) +
                               " does not match spec-implied " + std::to_string(t.size()));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(t.size())));
    if (!in) throw ModelIoError(ModelIoError::Kind::Truncated,
                                std::string("model file truncated reading ") + what);
}

} // namespace detail

template <typename Scalar>
void save_ensemble(const Ensemble<Scalar>& ens, const std::string& path,
                   const std::string& config_json = "{}") {
    if (ens.rounds.empty()) throw ValueError("save_ensemble: empty ensemble");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelIoError(ModelIoError::Kind::Io, "cannot open " + path + " for write");

    out.write(kModelMagic, 4);
    detail::write_pod(out, kModelVersion);
    detail::write_pod(out, static_cast<std::uint8_t>(sizeof(Scalar)));
    detail::write_pod(out, static_cast<std::uint32_t>(ens.classes));
    detail::write_pod(out, static_cast<std::uint32_t>(ens.rounds.size()));
    detail::write_blob(out, config_json);

    for (const auto& r : ens.rounds) {
        detail::write_pod(out, r.beta);
        detail::write_pod(out, r.alpha);
        detail::write_pod(out, r.pseudo_loss);
        detail::write_pod(out, r.raw_pseudo_loss);
        detail::write_pod(out, r.resample_seed);
        detail::write_pod(out, r.member.seed);
        detail::write_pod(out, static_cast<std::uint32_t>(r.train_report.best_epoch));
        detail::write_pod(out, static_cast<std::uint32_t>(r.train_report.val_errors.size()));
        for (double e : r.train_report.val_errors) detail::write_pod(out, e);
        detail::write_blob(out, spec_to_json(r.member.spec).dump());
        for (const auto& p : r.member.params) {
            if (!p.has_params()) continue;
            detail::write_tensor(out, p.weights);
            detail::write_tensor(out, p.bias);
        }
    }
    if (!out) throw ModelIoError(ModelIoError::Kind::Io, "write failed for " + path);
}

template <typename Scalar>
struct LoadedEnsemble {
    Ensemble<Scalar> ensemble;
    std::string config_json;
};

template <typename Scalar>
LoadedEnsemble<Scalar> load_ensemble(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelIoError(ModelIoError::Kind::Io, "cannot open " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kModelMagic, 4))
        throw ModelIoError(ModelIoError::Kind::BadMagic, path + " is not a model file");
    const auto version = detail::read_pod<std::uint32_t>(in, "version");
    if (version != kModelVersion)
        throw ModelIoError(ModelIoError::Kind::VersionMismatch,
                           "model format version " + std::to_string(version) +
                               " is not the supported version " + std::to_string(kModelVersion));
    const auto scalar_size = detail::read_pod<std::uint8_t>(in, "scalar size");
    if (scalar_size != sizeof(Scalar))
        throw ModelIoError(ModelIoError::Kind::Invalid,
                           "model stores " + std::to_string(int(scalar_size)) +
                               "-byte scalars, reader expects " + std::to_string(sizeof(Scalar)));

    LoadedEnsemble<Scalar> out;
    out.ensemble.classes = static_cast<int>(detail::read_pod<std::uint32_t>(in, "class count"));
    const auto n_rounds = detail::read_pod<std::uint32_t>(in, "round count");
    if (out.ensemble.classes < 2 || n_rounds == 0 || out.ensemble.classes > 1000000 ||
        n_rounds > 1000000)
        throw ModelIoError(ModelIoError::Kind::Invalid, "model header has no usable ensemble");
    out.config_json = detail::read_blob(in, "config");

    for (std::uint32_t t = 0; t < n_rounds; ++t) {
        BoostRound<Scalar> r;
        r.beta = detail::read_pod<double>(in, "beta");
        r.alpha = detail::read_pod<double>(in, "alpha");
        r.pseudo_loss = detail::read_pod<double>(in, "pseudo loss");
        r.raw_pseudo_loss = detail::read_pod<double>(in, "raw pseudo loss");
        r.resample_seed = detail::read_pod<std::uint64_t>(in, "resample seed");
        const auto member_seed = detail::read_pod<std::uint64_t>(in, "member seed");
        r.train_report.best_epoch =
            static_cast<int>(detail::read_pod<std::uint32_t>(in, "best epoch"));
        const auto n_epochs = detail::read_pod<std::uint32_t>(in, "epoch count");
        if (n_epochs > 10000000)
            throw ModelIoError(ModelIoError::Kind::Invalid, "implausible epoch count");
        r.train_report.val_errors.resize(n_epochs);
        for (auto& e : r.train_report.val_errors) e = detail::read_pod<double>(in, "val error");

        NetworkSpec spec;
        try {
            spec = spec_from_json(json::parse(detail::read_blob(in, "member spec")));
        } catch (const json::exception& e) {
            throw ModelIoError(ModelIoError::Kind::Invalid,
                               std::string("bad member spec in model: ") + e.what());
        }
        if (class_count(spec) != out.ensemble.classes)
            throw ModelIoError(ModelIoError::Kind::Invalid,
                               "round " + std::to_string(t) + " member has " +
                                   std::to_string(class_count(spec)) +
                                   " classes, ensemble header says " +
                                   std::to_string(out.ensemble.classes));
        if (!out.ensemble.rounds.empty() &&
            spec.input_shape != out.ensemble.rounds.front().member.spec.input_shape)
            throw ModelIoError(ModelIoError::Kind::Invalid,
                               "round " + std::to_string(t) +
                                   " member input shape differs from round 0");
        r.member = build_network<Scalar>(spec, member_seed);
        for (auto& p : r.member.params) {
            if (!p.has_params()) continue;
            detail::read_tensor_into(in, p.weights, "weights");
            detail::read_tensor_into(in, p.bias, "bias");
        }
        if (!(r.beta > 0.0 && r.beta < 1.0))
            throw ModelIoError(ModelIoError::Kind::Invalid, "round beta outside (0,1)");
        out.ensemble.rounds.push_back(std::move(r));
    }
    return out;
}

} // namespace dib
