#include "inflow/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/sha.h>

namespace inflow {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::inflow: return "inflow";
        case Variant::inflow_t: return "inflow_t";
        case Variant::inflow_j: return "inflow_j";
        case Variant::realnvp: return "realnvp";
        case Variant::realnvp_c: return "realnvp_c";
        case Variant::revin: return "revin";
        case Variant::none: return "none";
    }
    return "unknown";
}

Variant variant_from_string(const std::string& s) {
    for (Variant v : ablation_roster())
        if (to_string(v) == s) return v;
    throw ConfigError("unknown variant '" + s + "' (expected inflow, inflow_t, inflow_j, realnvp, realnvp_c, revin, none)");
}

const std::vector<Variant>& ablation_roster() {
    static const std::vector<Variant> roster = {Variant::realnvp, Variant::realnvp_c, Variant::inflow_j,
                                                Variant::inflow_t, Variant::inflow,   Variant::revin,
                                                Variant::none};
    return roster;
}

TrainMode RunConfig::resolved_mode() const {
    switch (model.variant) {
        case Variant::inflow_j: return TrainMode::joint;
        case Variant::revin: return model.revin_bilevel ? TrainMode::bilevel : TrainMode::joint;
        case Variant::none: return TrainMode::backbone_only;
        default: return TrainMode::bilevel;
    }
}

void RunConfig::validate() const {
    if (requested_mode && *requested_mode != resolved_mode())
        throw ConfigError("variant " + to_string(model.variant) + " trains in mode " + to_string(resolved_mode()) +
                          ", but the config asks for " + to_string(*requested_mode));
    if (dataset.source == "synthetic") {
        dataset.synthetic.validate();
    } else if (dataset.source == "csv") {
        if (dataset.csv_path.empty()) throw ConfigError("dataset.csv.path is required for csv datasets");
    } else {
        throw ConfigError("dataset.source must be 'synthetic' or 'csv', got '" + dataset.source + "'");
    }
    if (dataset.ratios.train == 0 || dataset.ratios.val == 0) throw ConfigError("split ratios must be positive");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    model.backbone.validate();
    train.validate();
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json ds = {{"source", dataset.source},
                         {"preset", dataset.preset},
                         {"synthetic", dataset.synthetic.to_json()},
                         {"csv", {{"path", dataset.csv_path}, {"columns", dataset.columns}}},
                         {"ratios", {dataset.ratios.train, dataset.ratios.val, dataset.ratios.test}},
                         {"zscore", dataset.zscore}};
    const auto& b = model.backbone;
    nlohmann::json m = {{"variant", to_string(model.variant)},
                        {"blocks", model.blocks},
                        {"coupling_width", model.flow.coupling_width},
                        {"eps", model.flow.eps},
                        {"detach_stats", model.flow.detach_stats},
                        {"revin_bilevel", model.revin_bilevel},
                        {"backbone", to_string(b.kind)},
                        {"lookback", b.lookback},
                        {"horizon", b.horizon},
                        {"hidden_width", b.hidden_width},
                        {"depth", b.depth},
                        {"nbeats_depth", b.nbeats_depth},
                        {"nbeats_blocks", b.nbeats_blocks},
                        {"per_variate", b.per_variate}};
    nlohmann::json t = train.to_json();
    t.erase("seed");
    if (!requested_mode) t.erase("mode");
    return {{"dataset", ds}, {"model", m}, {"train", t}, {"stride", stride},
            {"output", output_dir.string()}, {"seeds", seeds}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            c.dataset.source = d.value("source", c.dataset.source);
            if (d.contains("preset")) {
                c.dataset.preset = d.at("preset").get<std::string>();
                c.dataset.synthetic = SyntheticConfig::preset(c.dataset.preset);
            }
            if (d.contains("synthetic")) {
                nlohmann::json merged = c.dataset.synthetic.to_json();
                merged.update(d.at("synthetic"));
                c.dataset.synthetic = SyntheticConfig::from_json(merged);
            }
            if (d.contains("csv")) {
                c.dataset.csv_path = d.at("csv").value("path", std::string());
                c.dataset.columns = d.at("csv").value("columns", std::vector<std::string>{});
            }
            if (d.contains("ratios")) {
                const auto r = d.at("ratios").get<std::vector<std::size_t>>();
                if (r.size() != 3) throw ConfigError("dataset.ratios needs three entries");
                c.dataset.ratios = {r[0], r[1], r[2]};
            }
            c.dataset.zscore = d.value("zscore", c.dataset.zscore);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            if (m.contains("variant")) c.model.variant = variant_from_string(m.at("variant").get<std::string>());
            c.model.blocks = m.value("blocks", c.model.blocks);
            c.model.flow.coupling_width = m.value("coupling_width", c.model.flow.coupling_width);
            c.model.flow.eps = m.value("eps", c.model.flow.eps);
            c.model.flow.detach_stats = m.value("detach_stats", c.model.flow.detach_stats);
            c.model.revin_bilevel = m.value("revin_bilevel", c.model.revin_bilevel);
            auto& b = c.model.backbone;
            if (m.contains("backbone")) b.kind = backbone_from_string(m.at("backbone").get<std::string>());
            b.lookback = m.value("lookback", b.lookback);
            b.horizon = m.value("horizon", b.horizon);
            b.hidden_width = m.value("hidden_width", b.hidden_width);
            b.depth = m.value("depth", b.depth);
            b.nbeats_depth = m.value("nbeats_depth", b.nbeats_depth);
            b.nbeats_blocks = m.value("nbeats_blocks", b.nbeats_blocks);
            b.per_variate = m.value("per_variate", b.per_variate);
        }
        if (j.contains("train")) {
            c.train = TrainConfig::from_json(j.at("train"));
            if (j.at("train").contains("mode")) c.requested_mode = c.train.mode;
        }
        c.stride = j.value("stride", c.stride);
        if (j.contains("output")) c.output_dir = j.at("output").get<std::string>();
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.train.mode = c.requested_mode.value_or(c.resolved_mode());
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

std::string RunConfig::content_hash() const {
    nlohmann::json j = to_json();
    j.erase("output");
    return git_blob_hash(j.dump());
}

std::string git_blob_hash(const std::string& content) {
    const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
    std::ostringstream out;
    for (unsigned char c : digest) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
    return out.str();
}

}  // namespace inflow
