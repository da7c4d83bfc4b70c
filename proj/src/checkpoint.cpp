#include "tanklab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tanklab/errors.hpp"

namespace tanklab::nn {

namespace {
constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        unsigned int chunk = static_cast<unsigned int>(data[i]) << 16;
        if (i + 1 < len) chunk |= static_cast<unsigned int>(data[i + 1]) << 8;
        if (i + 2 < len) chunk |= static_cast<unsigned int>(data[i + 2]);
        out.push_back(kB64Chars[(chunk >> 18) & 0x3f]);
        out.push_back(kB64Chars[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? kB64Chars[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? kB64Chars[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw SchemaError(std::string("base64: invalid character '") + c + "'");
    };
    if (text.size() % 4 != 0) throw SchemaError("base64: length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        for (int k = 0; k < 4; ++k) v[k] = val(text[i + k]);
        unsigned int chunk = (static_cast<unsigned int>(v[0]) << 18) |
                             (static_cast<unsigned int>(v[1]) << 12);
        out.push_back(static_cast<unsigned char>((chunk >> 16) & 0xff));
        if (v[2] >= 0) {
            chunk |= static_cast<unsigned int>(v[2]) << 6;
            out.push_back(static_cast<unsigned char>((chunk >> 8) & 0xff));
        }
        if (v[3] >= 0) {
            chunk |= static_cast<unsigned int>(v[3]);
            out.push_back(static_cast<unsigned char>(chunk & 0xff));
        }
    }
    return out;
}

namespace {

std::string tensor_to_b64(const Tensor& t) {
    std::vector<unsigned char> bytes(t.size() * sizeof(double));
    std::memcpy(bytes.data(), t.data(), bytes.size());
    return base64_encode(bytes.data(), bytes.size());
}

void b64_to_tensor(const std::string& text, Tensor& t) {
    std::vector<unsigned char> bytes = base64_decode(text);
    if (bytes.size() != t.size() * sizeof(double))
        throw SchemaError("checkpoint: blob size " + std::to_string(bytes.size()) +
                          " does not match tensor " + t.shape_str());
    std::memcpy(t.data(), bytes.data(), bytes.size());
}

}  // namespace

nlohmann::json checkpoint_to_json(const std::string& model_kind, const nlohmann::json& config,
                                  std::uint64_t seed, const ParamSet& params,
                                  const nlohmann::json& extra) {
    nlohmann::json j;
    j["format"] = "tanklab-checkpoint-v1";
    j["model"] = model_kind;
    j["seed"] = seed;
    j["config"] = config;
    if (!extra.empty()) j["extra"] = extra;
    nlohmann::json plist = nlohmann::json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& t = *params.tensors[i];
        plist.push_back({{"name", params.names[i]},
                         {"rows", t.rows()},
                         {"cols", t.cols()},
                         {"data", tensor_to_b64(t)}});
    }
    j["params"] = plist;
    return j;
}

void checkpoint_restore(const nlohmann::json& ckpt, const ParamSet& params) {
    if (!ckpt.contains("params") || !ckpt["params"].is_array())
        throw SchemaError("checkpoint: missing params array");
    const auto& plist = ckpt["params"];
    if (plist.size() != params.size())
        throw SchemaError("checkpoint: has " + std::to_string(plist.size()) +
                          " params, model expects " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = plist[i];
        const std::string name = entry.at("name").get<std::string>();
        if (name != params.names[i])
            throw SchemaError("checkpoint: parameter " + std::to_string(i) + " is '" + name +
                              "', model expects '" + params.names[i] + "'");
        Tensor& t = *params.tensors[i];
        if (entry.at("rows").get<std::size_t>() != t.rows() ||
            entry.at("cols").get<std::size_t>() != t.cols())
            throw SchemaError("checkpoint: shape mismatch for parameter '" + name + "'");
        b64_to_tensor(entry.at("data").get<std::string>(), t);
    }
}

void save_checkpoint(const std::string& path, const nlohmann::json& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << ckpt.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

nlohmann::json load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("checkpoint not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("checkpoint parse error in " + path + ": " + e.what());
    }
    if (!j.contains("format") || j["format"] != "tanklab-checkpoint-v1")
        throw SchemaError("checkpoint: unknown format in " + path);
    return j;
}

nlohmann::json mlp_manifest(const Mlp& mlp) {
    nlohmann::json layers = nlohmann::json::array();
    for (const DenseLayer& l : mlp.layers) {
        layers.push_back({{"in", l.in_dim()},
                          {"out", l.out_dim()},
                          {"activation", activation_name(l.act)}});
    }
    return layers;
}

}  // namespace tanklab::nn
