#include "inflow/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "inflow/errors.hpp"

namespace inflow {

namespace {

constexpr std::array<char, 8> kMagic = {'I', 'N', 'F', 'L', 'O', 'W', 'C', 'K'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Parsed {
    nlohmann::json header;
    std::size_t payload_start;
};

Parsed parse(const std::string& bytes, const std::filesystem::path& path) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
        throw DataError(path.string() + " is not a checkpoint");
    const auto n = get_u64(reinterpret_cast<const unsigned char*>(bytes.data()) + 8);
    if (16 + n > bytes.size()) throw DataError(path.string() + ": truncated header");
    return {nlohmann::json::parse(bytes.substr(16, n)), 16 + static_cast<std::size_t>(n)};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params,
                     const nlohmann::json& meta) {
    nlohmann::json entries = nlohmann::json::array();
    std::string payload;
    for (const auto* p : params) {
        entries.push_back({{"name", p->name}, {"offset", payload.size()}, {"shape", p->value.shape()}});
        for (double v : p->value.data()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
    }
    const nlohmann::json header = {{"format", "inflow-checkpoint"}, {"version", 1}, {"params", entries}, {"meta", meta}};
    const std::string text = header.dump();

    std::string out(kMagic.begin(), kMagic.end());
    put_u64(out, text.size());
    out += text;
    out += payload;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("failed writing checkpoint " + path.string());
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
    return parse(read_file(path), path).header;
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
    const std::string bytes = read_file(path);
    const Parsed parsed = parse(bytes, path);
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& e : parsed.header.at("params")) by_name[e.at("name").get<std::string>()] = &e;

    for (auto* p : params) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw DataError("checkpoint has no parameter '" + p->name + "'");
        const auto shape = it->second->at("shape").get<Shape>();
        if (shape != p->value.shape())
            throw DimensionError("checkpoint parameter '" + p->name + "' has shape " + shape_string(shape) +
                                 ", model expects " + shape_string(p->value.shape()));
        const std::size_t offset = parsed.payload_start + it->second->at("offset").get<std::size_t>();
        if (offset + 8 * p->value.size() > bytes.size())
            throw DataError("checkpoint parameter '" + p->name + "' runs past end of file");
        const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
        auto data = p->value.data();
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(get_u64(raw + 8 * i));
    }
    return parsed.header.value("meta", nlohmann::json::object());
}

}  // namespace inflow
