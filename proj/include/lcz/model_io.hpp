#pragma once

#include <cstdint>
#include <string>

#include "lcz/io.hpp"
#include "lcz/transfer.hpp"

namespace lcz {

/// Binary model container: magic "LCZNN", u32le version (1), u32le length of
/// a JSON descriptor, the descriptor bytes, then all state arrays as f32le
/// in declaration order (batch-norm running statistics included).

inline json mscnn_config_to_json(const MscnnConfig& cfg) {
    return json{{"in_channels", cfg.in_channels},
                {"input_size", cfg.input_size},
                {"branch_channels", cfg.branch_channels},
                {"branch_kernels", cfg.branch_kernels},
                {"block_channels", cfg.block_channels},
                {"block_kernel", cfg.block_kernel},
                {"dense_units", cfg.dense_units},
                {"n_classes", cfg.n_classes},
                {"dropout", cfg.dropout}};
}

inline MscnnConfig mscnn_config_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"in_channels", "input_size", "branch_channels", "branch_kernels", "block_channels",
                         "block_kernel", "dense_units", "n_classes", "dropout"},
                        "model config");
    MscnnConfig cfg;
    if (j.contains("in_channels")) cfg.in_channels = j.at("in_channels").get<int>();
    if (j.contains("input_size")) cfg.input_size = j.at("input_size").get<int>();
    if (j.contains("branch_channels")) cfg.branch_channels = j.at("branch_channels").get<int>();
    if (j.contains("branch_kernels")) {
        auto v = j.at("branch_kernels").get<std::vector<int>>();
        require(v.size() == 3, ErrorKind::malformed, "branch_kernels must list exactly 3 kernel sizes");
        for (int i = 0; i < 3; ++i) cfg.branch_kernels[i] = v[i];
    }
    if (j.contains("block_channels")) cfg.block_channels = j.at("block_channels").get<std::vector<int>>();
    if (j.contains("block_kernel")) cfg.block_kernel = j.at("block_kernel").get<int>();
    if (j.contains("dense_units")) cfg.dense_units = j.at("dense_units").get<int>();
    if (j.contains("n_classes")) cfg.n_classes = j.at("n_classes").get<int>();
    if (j.contains("dropout")) cfg.dropout = j.at("dropout").get<double>();
    cfg.validate();
    return cfg;
}

namespace detail {

constexpr char kModelMagic[5] = {'L', 'C', 'Z', 'N', 'N'};

inline void append_model_payload(std::vector<std::uint8_t>& out, const std::vector<std::vector<float>*>& arrays) {
    for (const auto* a : arrays)
        for (float v : *a) put_le(out, v);
}

inline void read_model_payload(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                               const std::vector<std::vector<float>*>& arrays) {
    std::size_t need = 0;
    for (const auto* a : arrays) need += a->size() * 4;
    require(bytes.size() - offset == need, ErrorKind::malformed, "model payload size mismatch");
    const std::uint8_t* p = bytes.data() + offset;
    for (auto* a : arrays)
        for (float& v : *a) {
            v = get_le<float>(p);
            p += 4;
        }
}

inline std::vector<std::uint8_t> model_container(const json& descriptor,
                                                 const std::vector<std::vector<float>*>& arrays) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kModelMagic, kModelMagic + 5);
    put_le<std::uint32_t>(out, 1);
    const std::string desc = descriptor.dump();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
    out.insert(out.end(), desc.begin(), desc.end());
    append_model_payload(out, arrays);
    return out;
}

inline json open_model_container(const std::vector<std::uint8_t>& bytes, std::size_t& payload_offset) {
    require(bytes.size() >= 13, ErrorKind::malformed, "model file is truncated");
    require(std::equal(kModelMagic, kModelMagic + 5, bytes.begin()), ErrorKind::malformed,
            "model file has wrong magic");
    const std::uint32_t version = get_le<std::uint32_t>(bytes.data() + 5);
    require(version == 1, ErrorKind::malformed, "unsupported model version");
    const std::uint32_t json_len = get_le<std::uint32_t>(bytes.data() + 9);
    require(bytes.size() >= 13u + json_len, ErrorKind::malformed, "model descriptor is truncated");
    json desc;
    try {
        desc = json::parse(bytes.begin() + 13, bytes.begin() + 13 + json_len);
    } catch (const json::exception& e) {
        fail(ErrorKind::malformed, std::string("model descriptor is not valid JSON: ") + e.what());
    }
    payload_offset = 13u + json_len;
    return desc;
}

} // namespace detail

inline void save_mscnn(const std::string& path, MscnnModel<float>& model) {
    json desc{{"kind", "mscnn"}, {"seed", model.seed}, {"config", mscnn_config_to_json(model.cfg)}};
    write_file_atomic(path, detail::model_container(desc, model.state_arrays()));
}

inline void save_transfer(const std::string& path, TransferModel<float>& tm) {
    json desc{{"kind", "transfer"},
              {"seed", tm.backbone.seed},
              {"config", mscnn_config_to_json(tm.backbone.cfg)},
              {"freeze_through", tm.freeze_through},
              {"hidden", tm.hidden},
              {"freeze_heads", tm.freeze_heads}};
    write_file_atomic(path, detail::model_container(desc, tm.state_arrays()));
}

enum class ModelKind { mscnn, transfer };

/// Either model flavor, reconstructed from one container file.
struct LoadedModel {
    ModelKind kind = ModelKind::mscnn;
    MscnnModel<float> mscnn;
    TransferModel<float> transfer;

    MscnnConfig& cfg() { return kind == ModelKind::mscnn ? mscnn.cfg : transfer.backbone.cfg; }
};

inline LoadedModel load_model(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    std::size_t payload = 0;
    const json desc = detail::open_model_container(bytes, payload);
    require(desc.is_object() && desc.contains("kind"), ErrorKind::malformed, "model descriptor lacks kind");
    const std::string kind = desc.at("kind").get<std::string>();
    LoadedModel out;
    if (kind == "mscnn") {
        reject_unknown_keys(desc, {"kind", "seed", "config"}, "model descriptor");
        out.kind = ModelKind::mscnn;
        const MscnnConfig cfg = mscnn_config_from_json(desc.at("config"));
        out.mscnn.init(cfg, desc.at("seed").get<std::uint64_t>());
        detail::read_model_payload(bytes, payload, out.mscnn.state_arrays());
    } else if (kind == "transfer") {
        reject_unknown_keys(desc, {"kind", "seed", "config", "freeze_through", "hidden", "freeze_heads"},
                            "model descriptor");
        out.kind = ModelKind::transfer;
        const MscnnConfig cfg = mscnn_config_from_json(desc.at("config"));
        MscnnModel<float> backbone;
        backbone.init(cfg, desc.at("seed").get<std::uint64_t>());
        out.transfer = attach_heads(backbone, desc.at("freeze_through").get<int>(),
                                    desc.at("hidden").get<int>());
        if (desc.contains("freeze_heads")) out.transfer.freeze_heads = desc.at("freeze_heads").get<bool>();
        detail::read_model_payload(bytes, payload, out.transfer.state_arrays());
    } else {
        fail(ErrorKind::malformed, "unknown model kind: " + kind);
    }
    return out;
}

inline MscnnModel<float> load_mscnn(const std::string& path) {
    LoadedModel m = load_model(path);
    require(m.kind == ModelKind::mscnn, ErrorKind::malformed, "expected a plain model file");
    return std::move(m.mscnn);
}

inline TransferModel<float> load_transfer(const std::string& path) {
    LoadedModel m = load_model(path);
    require(m.kind == ModelKind::transfer, ErrorKind::malformed, "expected a transfer model file");
    return std::move(m.transfer);
}

} // namespace lcz
