#include "dacl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dacl/errors.hpp"
#include "json.hpp"

namespace dacl {

namespace {

constexpr const char* kFormat = "dacl-checkpoint";
constexpr int kVersion = 1;

std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t out = 0;
        for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
        return out;
    }
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& blob_path) {
    auto p = blob_path;
    p.replace_extension(".json");
    return p;
}

void save_checkpoint(const Model& model, const std::filesystem::path& blob_path) {
    if (manifest_path(blob_path) == blob_path) {
        throw DataError("checkpoint blob path must not end in .json: " + blob_path.string());
    }
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw DataError("cannot write checkpoint " + blob_path.string());
    nlohmann::json params = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& p : model.parameters()) {
        for (double v : p.tensor.data()) {
            auto bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
            blob.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
        }
        const std::uint64_t bytes = p.tensor.numel() * sizeof(double);
        params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}, {"bytes", bytes}});
        offset += bytes;
    }
    if (!blob) throw DataError("failed writing checkpoint " + blob_path.string());

    nlohmann::json manifest = {{"format", kFormat},
                               {"version", kVersion},
                               {"dtype", "f64-le"},
                               {"total_bytes", offset},
                               {"config", model.config.to_json()},
                               {"parameters", params}};
    std::ofstream out(manifest_path(blob_path), std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint manifest " + manifest_path(blob_path).string());
    out << manifest.dump(2) << '\n';
}

Model load_checkpoint(const std::filesystem::path& blob_path) {
    if (!std::filesystem::exists(blob_path)) throw DataError("checkpoint " + blob_path.string() + " does not exist");
    const auto mpath = manifest_path(blob_path);
    std::ifstream min(mpath);
    if (!min) throw DataError("cannot open checkpoint manifest " + mpath.string());
    std::ifstream bin(blob_path, std::ios::binary);
    if (!bin) throw DataError("cannot open checkpoint " + blob_path.string());

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(min);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint manifest " + mpath.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kVersion) {
        throw DataError(mpath.string() + " is not a version-1 dacl checkpoint manifest");
    }
    std::stringstream ss;
    ss << bin.rdbuf();
    const std::string bytes = ss.str();

    Model model = init_model(ModelConfig::from_json(manifest.at("config")));
    auto params = model.parameters();
    const auto& entries = manifest.at("parameters");
    if (entries.size() != params.size() || manifest.at("total_bytes").get<std::uint64_t>() != bytes.size()) {
        throw DataError("checkpoint " + blob_path.string() + " does not match its manifest");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = entries[i];
        auto& t = params[i].tensor;
        if (e.at("name").get<std::string>() != params[i].name || e.at("shape").get<Shape>() != t.shape()) {
            throw DataError("checkpoint parameter " + e.at("name").get<std::string>() +
                            " does not match the architecture in " + mpath.string());
        }
        const auto offset = e.at("offset").get<std::uint64_t>();
        const auto len = e.at("bytes").get<std::uint64_t>();
        if (len != t.numel() * sizeof(double) || offset + len > bytes.size()) {
            throw DataError("checkpoint parameter " + params[i].name + " has an invalid byte range");
        }
        auto values = t.mutable_data();
        for (std::size_t k = 0; k < values.size(); ++k) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, bytes.data() + offset + k * sizeof(bits), sizeof(bits));
            values[k] = std::bit_cast<double>(to_little_endian(bits));
        }
    }
    return model;
}

}  // namespace dacl
