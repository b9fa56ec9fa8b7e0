#include "inflow/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "inflow/rng.hpp"

namespace inflow {

// ---------------------------------------------------------------------------
// Synthetic series

SyntheticConfig SyntheticConfig::preset(const std::string& name) {
    SyntheticConfig cfg;
    if (name == "synthetic-1") cfg.tau = 24;
    else if (name == "synthetic-2") cfg.tau = 12;
    else if (name == "synthetic-3") cfg.tau = 48;
    else throw ConfigError("unknown synthetic preset '" + name + "'");
    return cfg;
}

void SyntheticConfig::validate() const {
    if (tau < 1) throw ConfigError("synthetic tau must be >= 1");
    if (tau > total_length)
        throw ConfigError("synthetic tau (" + std::to_string(tau) + ") exceeds total_length (" +
                          std::to_string(total_length) + ")");
    if (num_series < 1) throw ConfigError("synthetic num_series must be >= 1");
    if (clamp_period && !(min_period > 0.0)) throw ConfigError("synthetic min_period must be positive");
}

nlohmann::json SyntheticConfig::to_json() const {
    return {{"tau", tau},           {"total_length", total_length}, {"num_series", num_series},
            {"seed", seed},         {"clamp_period", clamp_period}, {"min_period", min_period}};
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    c.tau = j.value("tau", c.tau);
    c.total_length = j.value("total_length", c.total_length);
    c.num_series = j.value("num_series", c.num_series);
    c.seed = j.value("seed", c.seed);
    c.clamp_period = j.value("clamp_period", c.clamp_period);
    c.min_period = j.value("min_period", c.min_period);
    return c;
}

double SegmentParams::value_at(double t) const {
    return amplitude * std::cos(2.0 * std::numbers::pi * t / period + phase) + level;
}

std::size_t segment_count(std::size_t total_length, std::size_t tau) { return (total_length + tau - 1) / tau; }

std::vector<SegmentParams> synthetic_segments(const SyntheticConfig& cfg, std::size_t series) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, series));
    const std::size_t count = segment_count(cfg.total_length, cfg.tau);
    std::vector<SegmentParams> out;
    out.reserve(count);
    for (std::size_t u = 0; u < count; ++u) {
        SegmentParams p;
        p.start = u * cfg.tau;
        p.length = std::min(cfg.tau, cfg.total_length - p.start);
        p.amplitude = rng.uniform(-1000.0, 1000.0);
        p.period = rng.uniform(0.0, 100.0);
        if (cfg.clamp_period) p.period = std::max(p.period, cfg.min_period);
        p.phase = rng.uniform(0.0, 100.0);
        // Level range depends on the segment's first timestamp; the two ends
        // are drawn between in numeric order.
        const double k = std::ceil(static_cast<double>(p.start) / 100.0);
        p.level = rng.uniform(-k * 100.0, -k * 50.0);
        out.push_back(p);
    }
    return out;
}

namespace {

void assign_splits(SeriesDataset& ds, SplitRatios r) {
    const std::size_t total = r.train + r.val + r.test;
    if (r.train == 0 || r.val == 0 || total == 0) throw ConfigError("split ratios need positive train and val parts");
    const std::size_t n = ds.length();
    ds.train_end = n * r.train / total;
    ds.val_end = n * (r.train + r.val) / total;
    if (!(0 < ds.train_end && ds.train_end < ds.val_end && ds.val_end <= n))
        throw DataError("series of length " + std::to_string(n) + " is too short for the requested split");
}

}  // namespace

SeriesDataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    SeriesDataset ds;
    ds.values = Tensor({cfg.total_length, cfg.num_series});
    for (std::size_t n = 0; n < cfg.num_series; ++n) {
        for (const auto& seg : synthetic_segments(cfg, n))
            for (std::size_t t = seg.start; t < seg.start + seg.length; ++t)
                ds.values.at(t, n) = seg.value_at(static_cast<double>(t));
        ds.columns.push_back("series_" + std::to_string(n));
    }
    assign_splits(ds, {});
    ds.provenance = {{"source", "synthetic"}, {"config", cfg.to_json()}};
    return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\"");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\"");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

SeriesDataset load_csv(const std::filesystem::path& path, const std::vector<std::string>& columns, SplitRatios ratios) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw DataError("CSV file '" + path.string() + "' is empty");
    const auto header = split_row(line);

    std::vector<std::size_t> picks;
    std::vector<std::string> names;
    if (columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) picks.push_back(i);
        names = header;
    } else {
        for (const auto& want : columns) {
            auto it = std::find(header.begin(), header.end(), want);
            if (it == header.end()) throw DataError("CSV column '" + want + "' not found in '" + path.string() + "'");
            picks.push_back(static_cast<std::size_t>(it - header.begin()));
            names.push_back(want);
        }
    }

    std::vector<double> values;
    std::size_t rows = 0, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        for (std::size_t k = 0; k < picks.size(); ++k) {
            const std::size_t col = picks[k];
            if (col >= cells.size())
                throw DataError("CSV line " + std::to_string(line_no) + " is missing column '" + names[k] + "'");
            const std::string& cell = cells[col];
            char* end = nullptr;
            const double v = cell.empty() ? 0.0 : std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size())
                throw DataError("CSV line " + std::to_string(line_no) + ", column '" + names[k] +
                                "': non-numeric value '" + cell + "'");
            if (!std::isfinite(v))
                throw DataError("CSV line " + std::to_string(line_no) + ", column '" + names[k] +
                                "': missing or non-finite value");
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw DataError("CSV file '" + path.string() + "' has no data rows");

    SeriesDataset ds;
    ds.values = Tensor({rows, picks.size()}, std::move(values));
    ds.columns = names;
    assign_splits(ds, ratios);
    ds.provenance = {{"source", "csv"},
                     {"path", path.string()},
                     {"columns", names},
                     {"split_ratios", {ratios.train, ratios.val, ratios.test}}};
    return ds;
}

void write_csv(const SeriesDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
    for (std::size_t d = 0; d < ds.variates(); ++d) out << (d ? "," : "") << ds.columns.at(d);
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t t = 0; t < ds.length(); ++t) {
        for (std::size_t d = 0; d < ds.variates(); ++d) out << (d ? "," : "") << ds.values.at(t, d);
        out << '\n';
    }
    if (!out) throw DataError("failed writing CSV file '" + path.string() + "'");
}

nlohmann::json dataset_manifest(const SeriesDataset& ds) {
    return {{"provenance", ds.provenance}, {"length", ds.length()},     {"variates", ds.variates()},
            {"columns", ds.columns},       {"train_end", ds.train_end}, {"val_end", ds.val_end}};
}

// ---------------------------------------------------------------------------
// Windows

std::string to_string(WindowRole r) {
    switch (r) {
        case WindowRole::inner_train: return "inner_train";
        case WindowRole::outer_val: return "outer_val";
        case WindowRole::validation: return "validation";
        case WindowRole::test: return "test";
    }
    return "unknown";
}

namespace {

WindowPair cut_window(const SeriesDataset& ds, std::size_t anchor, std::size_t L, std::size_t H, WindowRole role) {
    const std::size_t d = ds.variates();
    const auto src = ds.values.data();
    std::vector<double> x(src.begin() + static_cast<std::ptrdiff_t>((anchor - L) * d),
                          src.begin() + static_cast<std::ptrdiff_t>(anchor * d));
    std::vector<double> y(src.begin() + static_cast<std::ptrdiff_t>(anchor * d),
                          src.begin() + static_cast<std::ptrdiff_t>((anchor + H) * d));
    return {Tensor({L, d}, std::move(x)), Tensor({H, d}, std::move(y)), anchor, role};
}

std::vector<std::size_t> region_anchors(std::size_t begin, std::size_t end, const WindowOptions& o,
                                        const char* region) {
    const std::size_t need = o.lookback + o.horizon;
    if (end - begin < need)
        throw DataError(std::string(region) + " region has " + std::to_string(end - begin) +
                        " steps, fewer than lookback + horizon = " + std::to_string(need));
    std::vector<std::size_t> anchors;
    for (std::size_t t = begin + o.lookback; t + o.horizon <= end; t += o.stride) anchors.push_back(t);
    return anchors;
}

}  // namespace

WindowSet make_windows(const SeriesDataset& ds, const WindowOptions& o) {
    if (o.lookback < 1 || o.horizon < 1 || o.stride < 1) throw ConfigError("lookback, horizon and stride must be >= 1");
    WindowSet set;
    const auto train = region_anchors(0, ds.train_end, o, "train");
    const std::size_t inner = o.use_bilevel ? train.size() * 9 / 10 : train.size();
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto role = i < inner ? WindowRole::inner_train : WindowRole::outer_val;
        (i < inner ? set.inner_train : set.outer_val)
            .push_back(cut_window(ds, train[i], o.lookback, o.horizon, role));
    }
    for (auto t : region_anchors(ds.train_end, ds.val_end, o, "validation"))
        set.validation.push_back(cut_window(ds, t, o.lookback, o.horizon, WindowRole::validation));
    for (auto t : region_anchors(ds.val_end, ds.length(), o, "test"))
        set.test.push_back(cut_window(ds, t, o.lookback, o.horizon, WindowRole::test));
    return set;
}

std::uint64_t WindowSet::anchor_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    auto region = [&](std::uint64_t tag, const std::vector<WindowPair>& ws) {
        for (const auto& w : ws) {
            mix(tag);
            mix(w.anchor);
        }
    };
    region(0, inner_train);
    region(0, outer_val);
    region(1, validation);
    region(2, test);
    return h;
}

// ---------------------------------------------------------------------------
// Z-score

Tensor ZScoreStats::apply(const Tensor& t) const {
    const std::size_t d = mean.size();
    if (t.rank() == 0 || t.shape().back() != d)
        throw DimensionError("z-score stats for D=" + std::to_string(d) + " applied to " + shape_string(t.shape()));
    Tensor out = t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % d]) / std[i % d];
    return out;
}

Tensor ZScoreStats::invert(const Tensor& t) const {
    const std::size_t d = mean.size();
    if (t.rank() == 0 || t.shape().back() != d)
        throw DimensionError("z-score stats for D=" + std::to_string(d) + " inverted on " + shape_string(t.shape()));
    Tensor out = t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * std[i % d] + mean[i % d];
    return out;
}

nlohmann::json ZScoreStats::to_json() const { return {{"mean", mean}, {"std", std}}; }

ZScoreStats ZScoreStats::from_json(const nlohmann::json& j) {
    return {j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

std::pair<SeriesDataset, ZScoreStats> zscore_fit_apply(const SeriesDataset& ds) {
    if (ds.train_end == 0) throw DataError("z-score needs a nonempty training region");
    const std::size_t d = ds.variates(), n = ds.train_end;
    ZScoreStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < d; ++k) stats.mean[k] += ds.values.at(t, k);
    for (auto& m : stats.mean) m /= static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = ds.values.at(t, k) - stats.mean[k];
            stats.std[k] += diff * diff;
        }
    for (std::size_t k = 0; k < d; ++k) {
        stats.std[k] = std::sqrt(stats.std[k] / static_cast<double>(n));
        if (!(stats.std[k] > 0.0))
            throw DataError("variate '" + (k < ds.columns.size() ? ds.columns[k] : std::to_string(k)) +
                            "' has zero variance in the training region; exclude it from the column selection");
    }
    SeriesDataset out = ds;
    out.values = stats.apply(ds.values);
    out.zscored = true;
    return {std::move(out), std::move(stats)};
}

}  // namespace inflow
