#include <bit>
#include <cstring>
#include <numeric>

#include "flamewatch/classifier.hpp"
#include "flamewatch/error.hpp"
#include "flamewatch/fileio.hpp"

namespace flamewatch {

namespace {

constexpr char kMagic[8] = {'F', 'W', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw InputError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

void put_tensors(std::string& out, const TensorSet& set) {
    for (const auto& t : set)
        for (double x : t.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
}

void get_tensors(std::string_view in, std::size_t& pos, TensorSet& set) {
    for (auto& t : set)
        for (auto& x : t.data) x = static_cast<double>(std::bit_cast<float>(get_u32(in, pos)));
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    nlohmann::json header;
    header["config"] = to_json(model.config);
    header["vocab"] = model.vocab;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : model.params) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    header["tensors"] = tensors;
    header["adam_step"] = model.adam.step;
    const std::string h = header.dump();

    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    put_tensors(out, model.params);
    put_tensors(out, model.adam.m);
    put_tensors(out, model.adam.v);
    write_file_atomic(path, out);
}

Model load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const std::string where = path.string() + ": ";
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw InputError(where + "not a checkpoint file");
    std::size_t pos = sizeof kMagic;
    try {
        const std::uint32_t version = get_u32(bytes, pos);
        if (version != kVersion) throw InputError("unsupported checkpoint version " + std::to_string(version));
        const std::uint32_t hlen = get_u32(bytes, pos);
        if (pos + hlen > bytes.size()) throw InputError("checkpoint truncated");
        const auto header = nlohmann::json::parse(bytes.substr(pos, hlen));
        pos += hlen;

        // Rebuild the layout from the config, then overwrite every value.
        EmbeddingMatrix shape_only;
        shape_only.dim = static_cast<std::size_t>(header.at("config").at("embed_dim").get<int>());
        for (const auto& w : header.at("vocab")) shape_only.add_word(w.get<std::string>(), std::vector<double>(shape_only.dim));
        Model model = build_model(model_config_from_json(header.at("config")), shape_only);

        const auto& tensors = header.at("tensors");
        if (tensors.size() != kNumParams) throw InputError("checkpoint tensor count mismatch");
        for (std::size_t i = 0; i < kNumParams; ++i) {
            if (tensors[i].at("name").get<std::string>() != model.params[i].name ||
                tensors[i].at("shape").get<std::vector<std::size_t>>() != model.params[i].shape)
                throw InputError("checkpoint tensor " + model.params[i].name + " has an unexpected shape");
        }
        get_tensors(bytes, pos, model.params);
        get_tensors(bytes, pos, model.adam.m);
        get_tensors(bytes, pos, model.adam.v);
        if (pos != bytes.size()) throw InputError("trailing bytes after checkpoint tensors");
        model.adam.step = header.at("adam_step").get<std::uint64_t>();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(where + "bad checkpoint header: " + e.what());
    } catch (const InputError& e) {
        throw InputError(where + e.what());
    }
}

}  // namespace flamewatch
