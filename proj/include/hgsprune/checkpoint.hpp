#pragma once

// Self-describing checkpoint container.
//
//   "HGSPCKPT" | u32 version | u64 header bytes | JSON header | payload
//
// The JSON header carries the topology (blocks, layer geometry, BN flags),
// a tensor table {name, dtype, shape, offset, count}, the optional channel
// mask and a free-form metadata object. The payload holds the tensors as
// raw little-endian f64 or f32 values. f64 round-trips bit-exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hgsprune/error.hpp"
#include "hgsprune/netmodel.hpp"

namespace hgsp {

enum class Dtype { F64, F32 };

struct Checkpoint {
    NetworkSpec net;
    std::optional<ChannelMask> mask;
    nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr char kCheckpointMagic[8] = {'H', 'G', 'S', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class U>
U get_le(std::string_view in, std::size_t at) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

class PayloadWriter {
public:
    explicit PayloadWriter(Dtype dt) : dtype_(dt) {}

    void add(const std::string& name, std::vector<std::size_t> shape, std::span<const double> values) {
        const std::size_t elem = dtype_ == Dtype::F64 ? 8 : 4;
        table_.push_back({{"name", name},
                          {"dtype", dtype_ == Dtype::F64 ? "f64" : "f32"},
                          {"shape", shape},
                          {"offset", payload_.size()},
                          {"count", values.size()}});
        payload_.reserve(payload_.size() + values.size() * elem);
        for (double v : values) {
            if (dtype_ == Dtype::F64)
                put_le(payload_, std::bit_cast<std::uint64_t>(v));
            else
                put_le(payload_, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }

    nlohmann::json& table() { return table_; }
    std::string& payload() { return payload_; }

private:
    Dtype dtype_;
    nlohmann::json table_ = nlohmann::json::array();
    std::string payload_;
};

class PayloadReader {
public:
    PayloadReader(const nlohmann::json& table, std::string_view payload) : payload_(payload) {
        for (const auto& t : table) entries_[t.at("name").get<std::string>()] = t;
    }

    std::vector<double> read(const std::string& name, const std::vector<std::size_t>& expected_shape) const {
        const auto it = entries_.find(name);
        if (it == entries_.end()) throw IoError("checkpoint lacks tensor '" + name + "'");
        const auto& e = it->second;
        const auto shape = e.at("shape").get<std::vector<std::size_t>>();
        if (shape != expected_shape) throw IoError("checkpoint tensor '" + name + "' has unexpected shape");
        const auto dtype = e.at("dtype").get<std::string>();
        const auto offset = e.at("offset").get<std::size_t>();
        const auto count = e.at("count").get<std::size_t>();
        std::size_t expect = 1;
        for (auto d : shape) expect *= d;
        if (count != expect) throw IoError("checkpoint tensor '" + name + "' count disagrees with shape");
        const std::size_t elem = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
        if (elem == 0) throw IoError("checkpoint tensor '" + name + "': unknown dtype " + dtype);
        if (offset > payload_.size() || count * elem > payload_.size() - offset)
            throw IoError("checkpoint tensor '" + name + "' runs past the payload");
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t at = offset + i * elem;
            out[i] = elem == 8 ? std::bit_cast<double>(get_le<std::uint64_t>(payload_, at))
                               : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(payload_, at)));
        }
        return out;
    }

private:
    std::string_view payload_;
    std::map<std::string, nlohmann::json> entries_;
};

inline std::string layer_key(std::size_t l) { return "conv" + std::to_string(l); }

}  // namespace detail

inline std::string encode_checkpoint(const NetworkSpec& net, const ChannelMask* mask = nullptr,
                                     const nlohmann::json& metadata = nlohmann::json::object(),
                                     Dtype dtype = Dtype::F64) {
    net.validate();
    if (mask) mask->check_matches(net);
    nlohmann::json h;
    h["family"] = net.family;
    h["input_channels"] = net.input_channels;
    auto& blocks = h["blocks"] = nlohmann::json::array();
    for (const auto& b : net.blocks)
        blocks.push_back({{"kind", b.kind == BlockKind::Plain ? "plain" : "basic"},
                          {"first", b.first},
                          {"second", b.second},
                          {"pool_after", b.pool_after}});
    detail::PayloadWriter w(dtype);
    auto& layers = h["layers"] = nlohmann::json::array();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& c = net.layers[l];
        nlohmann::json j{{"out_channels", c.out_channels},   {"in_channels", c.in_channels},
                         {"kernel_size", c.kernel_size},     {"stride", c.stride},
                         {"padding", c.padding},             {"batchnorm", c.has_batchnorm}};
        const std::string k = detail::layer_key(l);
        w.add(k + ".weight", c.weights.shape(), c.weights.storage());
        if (c.has_batchnorm) {
            j["bn_eps"] = c.bn.eps;
            j["bn_momentum"] = c.bn.momentum;
            const std::vector<std::size_t> s{c.bn.size()};
            w.add(k + ".bn.scale", s, c.bn.scale);
            w.add(k + ".bn.shift", s, c.bn.shift);
            w.add(k + ".bn.running_mean", s, c.bn.running_mean);
            w.add(k + ".bn.running_var", s, c.bn.running_var);
        }
        layers.push_back(std::move(j));
    }
    h["classifier"] = {{"in_features", net.classifier.in_features}, {"out_features", net.classifier.out_features}};
    w.add("fc.weight", net.classifier.weights.shape(), net.classifier.weights.storage());
    w.add("fc.bias", {net.classifier.bias.size()}, net.classifier.bias);
    h["tensors"] = std::move(w.table());
    h["mask"] = mask ? nlohmann::json(mask->bits()) : nlohmann::json(nullptr);
    h["metadata"] = metadata;

    const std::string header = h.dump();
    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint64_t>(out, header.size());
    out += header;
    out += w.payload();
    return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    constexpr std::size_t prefix = sizeof kCheckpointMagic + 4 + 8;
    if (bytes.size() < prefix || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
        throw IoError("not a checkpoint (bad magic)");
    const auto version = detail::get_le<std::uint32_t>(bytes, 8);
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto hlen = detail::get_le<std::uint64_t>(bytes, 12);
    if (hlen > bytes.size() - prefix) throw IoError("checkpoint header truncated");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(bytes.substr(prefix, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint header: ") + e.what());
    }
    const detail::PayloadReader r(h.at("tensors"), bytes.substr(prefix + hlen));

    Checkpoint ck;
    try {
        NetworkSpec& net = ck.net;
        net.family = h.at("family").get<std::string>();
        net.input_channels = h.at("input_channels").get<int>();
        for (const auto& b : h.at("blocks")) {
            Block blk;
            blk.kind = b.at("kind").get<std::string>() == "basic" ? BlockKind::Basic : BlockKind::Plain;
            blk.first = b.at("first").get<int>();
            blk.second = b.at("second").get<int>();
            blk.pool_after = b.at("pool_after").get<bool>();
            net.blocks.push_back(blk);
        }
        std::size_t l = 0;
        for (const auto& j : h.at("layers")) {
            ConvLayerSpec c;
            c.layer_id = static_cast<int>(l);
            c.out_channels = j.at("out_channels").get<int>();
            c.in_channels = j.at("in_channels").get<int>();
            c.kernel_size = j.at("kernel_size").get<int>();
            c.stride = j.at("stride").get<int>();
            c.padding = j.at("padding").get<int>();
            c.has_batchnorm = j.at("batchnorm").get<bool>();
            const std::vector<std::size_t> shape{static_cast<std::size_t>(c.out_channels),
                                                 static_cast<std::size_t>(c.in_channels),
                                                 static_cast<std::size_t>(c.kernel_size),
                                                 static_cast<std::size_t>(c.kernel_size)};
            const std::string k = detail::layer_key(l);
            c.weights = Tensor(shape, r.read(k + ".weight", shape));
            if (c.has_batchnorm) {
                c.bn.eps = j.at("bn_eps").get<double>();
                c.bn.momentum = j.at("bn_momentum").get<double>();
                const std::vector<std::size_t> s{static_cast<std::size_t>(c.out_channels)};
                c.bn.scale = r.read(k + ".bn.scale", s);
                c.bn.shift = r.read(k + ".bn.shift", s);
                c.bn.running_mean = r.read(k + ".bn.running_mean", s);
                c.bn.running_var = r.read(k + ".bn.running_var", s);
            }
            net.layers.push_back(std::move(c));
            ++l;
        }
        auto& fc = net.classifier;
        fc.in_features = h.at("classifier").at("in_features").get<int>();
        fc.out_features = h.at("classifier").at("out_features").get<int>();
        const std::vector<std::size_t> ws{static_cast<std::size_t>(fc.out_features),
                                          static_cast<std::size_t>(fc.in_features)};
        fc.weights = Tensor(ws, r.read("fc.weight", ws));
        fc.bias = r.read("fc.bias", {static_cast<std::size_t>(fc.out_features)});
        if (!h.at("mask").is_null()) ck.mask = ChannelMask(h.at("mask").get<std::vector<std::vector<std::uint8_t>>>());
        ck.metadata = h.at("metadata");
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint header: ") + e.what());
    }
    ck.net.rebuild_structure();
    ck.net.validate();
    if (ck.mask) ck.mask->check_matches(ck.net);
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& net,
                            const ChannelMask* mask = nullptr,
                            const nlohmann::json& metadata = nlohmann::json::object(), Dtype dtype = Dtype::F64) {
    const std::string bytes = encode_checkpoint(net, mask, metadata, dtype);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write to a sibling and rename so an interrupted save never leaves a
    // truncated checkpoint behind for --resume to pick up.
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace hgsp
