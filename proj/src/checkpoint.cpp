#include "glosskit/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace glosskit {

using nlohmann::json;

json encoder_config_to_json(const EncoderConfig& cfg) {
    return json{{"n_layers", cfg.n_layers},
                {"hidden", cfg.hidden},
                {"n_heads", cfg.n_heads},
                {"ffn_dim", cfg.ffn_dim},
                {"max_positions", cfg.max_positions},
                {"input_vocab_size", cfg.input_vocab_size},
                {"label_vocab_size", cfg.label_vocab_size},
                {"dropout", cfg.dropout}};
}

EncoderConfig encoder_config_from_json(const json& j) {
    EncoderConfig cfg;
    cfg.n_layers = j.value("n_layers", cfg.n_layers);
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.n_heads = j.value("n_heads", cfg.n_heads);
    cfg.ffn_dim = j.value("ffn_dim", cfg.ffn_dim);
    cfg.max_positions = j.value("max_positions", cfg.max_positions);
    cfg.input_vocab_size = j.value("input_vocab_size", cfg.input_vocab_size);
    cfg.label_vocab_size = j.value("label_vocab_size", cfg.label_vocab_size);
    cfg.dropout = j.value("dropout", cfg.dropout);
    return cfg;
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const EncoderParamsF& params,
                     const json& extras) {
    const auto named = params.named_parameters();
    json manifest = json::array();
    std::uint64_t offset = 0;
    for (const auto& np : named) {
        manifest.push_back(
            {{"name", np.name}, {"shape", np.tensor->shape}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(np.tensor->size()) * sizeof(float);
    }
    json header;
    header["config"] = encoder_config_to_json(params.cfg);
    header["tensors"] = manifest;
    header["extras"] = extras;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw runtime_error("cannot write checkpoint to " + path);
    out.write("GLSK", 4);
    write_u32(out, kCheckpointVersion);
    write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& np : named) {
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char*>(np.tensor->value.data()),
                  static_cast<std::streamsize>(np.tensor->value.size() * sizeof(float)));
    }
    if (!out) throw runtime_error("short write while saving checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Data, "cannot open checkpoint " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "GLSK", 4) != 0)
        throw Error(ErrorKind::Data, "not a glosskit checkpoint: " + path);
    const std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw Error(ErrorKind::Data, "unsupported checkpoint version " +
                                         std::to_string(version) + " in " + path);
    const std::uint64_t header_len = read_u64(in);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw Error(ErrorKind::Data, "truncated checkpoint header in " + path);
    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Data, std::string("bad checkpoint header: ") + e.what());
    }

    Checkpoint ck;
    ck.params = init_params<float>(encoder_config_from_json(header.at("config")), 0);
    ck.extras = header.value("extras", json::object());

    auto named = ck.params.named_parameters();
    const auto& manifest = header.at("tensors");
    if (manifest.size() != named.size())
        throw Error(ErrorKind::Data, "checkpoint manifest lists " +
                                         std::to_string(manifest.size()) + " tensors, expected " +
                                         std::to_string(named.size()));
    for (size_t i = 0; i < named.size(); ++i) {
        const auto& entry = manifest[i];
        if (entry.at("name").get<std::string>() != named[i].name)
            throw Error(ErrorKind::Data, "checkpoint tensor order mismatch at '" +
                                             named[i].name + "'");
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape != named[i].tensor->shape)
            throw Error(ErrorKind::Data, "checkpoint shape mismatch for '" + named[i].name +
                                             "': " + shape_str(shape) + " vs " +
                                             shape_str(named[i].tensor->shape));
        in.read(reinterpret_cast<char*>(named[i].tensor->value.data()),
                static_cast<std::streamsize>(named[i].tensor->value.size() * sizeof(float)));
        if (!in) throw Error(ErrorKind::Data, "truncated checkpoint payload in " + path);
    }
    return ck;
}

} // namespace glosskit
