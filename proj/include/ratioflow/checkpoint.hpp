#pragma once

#include "ratioflow/flow_model.hpp"
#include "ratioflow/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace ratioflow {

// Checkpoint file layout, version 1:
//   bytes 0..3   magic "SCRF"
//   u32          version (little-endian)
//   u64          descriptor length in bytes (little-endian)
//   ...          UTF-8 JSON descriptor
//   ...          parameter payload, contiguous little-endian float64
//   u32          CRC-32 of the payload bytes
static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'S', 'C', 'R', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
    FlowScoreModel model;
    bool has_train_config = false;
    TrainConfig train_config;
};

namespace detail {

struct StoreRef {
    const char* name;
    const ParameterStore* store;
};

inline std::vector<StoreRef> store_refs(const FlowScoreModel& m) {
    return {{"encoder", &m.encoder},
            {"time_net", &m.time_net},
            {"cond_embed", &m.cond_embed},
            {"velocity_head", &m.velocity_head},
            {"score_head", &m.score_head}};
}

template <typename T>
void append_raw(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

}  // namespace detail

inline std::string checkpoint_to_bytes(const FlowScoreModel& model,
                                       const TrainConfig* train_config = nullptr) {
    Json manifest = Json::array();
    std::int64_t offset = 0;
    for (const auto& ref : detail::store_refs(model)) {
        for (const auto& e : *ref.store) {
            manifest.push_back(Json{{"store", ref.name},
                                    {"name", e.name},
                                    {"shape", e.shape},
                                    {"offset", offset},
                                    {"count", e.values.size()}});
            offset += e.values.size();
        }
    }

    Json desc{{"data_dim", model.config.data_dim},
              {"schedule", schedule_to_json(model.schedule)},
              {"conditions", condition_spec_to_json(model.conditions)},
              {"model", model_config_to_json(model.config)},
              {"t_window", Json::array({model.t_min, model.t_max})},
              {"train", train_config ? train_config_to_json(*train_config) : Json(nullptr)},
              {"manifest", manifest}};
    const std::string desc_str = desc.dump();

    std::string out;
    out.reserve(desc_str.size() + static_cast<std::size_t>(offset) * 8 + 64);
    out.append(kCheckpointMagic, 4);
    detail::append_raw<std::uint32_t>(out, kCheckpointVersion);
    detail::append_raw<std::uint64_t>(out, static_cast<std::uint64_t>(desc_str.size()));
    out += desc_str;

    const std::size_t payload_begin = out.size();
    for (const auto& ref : detail::store_refs(model))
        for (const auto& e : *ref.store)
            out.append(reinterpret_cast<const char*>(e.values.data()),
                       static_cast<std::size_t>(e.values.size()) * sizeof(double));
    const std::uint32_t crc = crc32(out.data() + payload_begin, out.size() - payload_begin);
    detail::append_raw<std::uint32_t>(out, crc);
    return out;
}

inline void save_checkpoint(const FlowScoreModel& model, const std::string& path,
                            const TrainConfig* train_config = nullptr) {
    const std::string bytes = checkpoint_to_bytes(model, train_config);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

inline LoadedCheckpoint checkpoint_from_bytes(const std::string& bytes) {
    const std::size_t header = 4 + 4 + 8;
    if (bytes.size() < header + 4) throw CheckpointError("checkpoint truncated");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw CheckpointError("bad magic: not a checkpoint file");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                              " (expected " + std::to_string(kCheckpointVersion) + ")");
    std::uint64_t desc_len = 0;
    std::memcpy(&desc_len, bytes.data() + 8, 8);
    if (bytes.size() < header + desc_len + 4) throw CheckpointError("checkpoint truncated");

    Json desc;
    try {
        desc = Json::parse(bytes.substr(header, desc_len));
    } catch (const Json::exception& e) {
        throw CheckpointError(std::string("bad descriptor JSON: ") + e.what());
    }

    const std::size_t payload_begin = header + desc_len;
    const std::size_t payload_size = bytes.size() - payload_begin - 4;
    if (payload_size % sizeof(double) != 0) throw CheckpointError("payload size not a multiple of 8");
    std::uint32_t stored_crc = 0;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    const std::uint32_t actual_crc = crc32(bytes.data() + payload_begin, payload_size);
    if (stored_crc != actual_crc) throw CheckpointError("payload checksum mismatch");

    LoadedCheckpoint out;
    try {
        check_known_keys(
            desc, {"data_dim", "schedule", "conditions", "model", "t_window", "train", "manifest"},
            "checkpoint descriptor");
        out.model.config = model_config_from_json(desc.at("model"));
        out.model.schedule = schedule_from_json(desc.at("schedule"));
        out.model.conditions = condition_spec_from_json(desc.at("conditions"));
        const auto tw = get_required<std::vector<double>>(desc, "t_window", "descriptor");
        if (tw.size() != 2) throw ConfigError("t_window must have two entries");
        out.model.t_min = tw[0];
        out.model.t_max = tw[1];
        if (get_required<int>(desc, "data_dim", "descriptor") != out.model.config.data_dim)
            throw ConfigError("data_dim disagrees with model config");
        if (!desc.at("train").is_null()) {
            out.train_config = train_config_from_json(desc.at("train"));
            out.has_train_config = true;
        }
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("bad descriptor: ") + e.what());
    } catch (const Json::exception& e) {
        throw CheckpointError(std::string("bad descriptor: ") + e.what());
    }

    const double* payload = reinterpret_cast<const double*>(bytes.data() + payload_begin);
    const std::int64_t payload_count = static_cast<std::int64_t>(payload_size / sizeof(double));

    ParameterStore* stores[] = {&out.model.encoder, &out.model.time_net, &out.model.cond_embed,
                                &out.model.velocity_head, &out.model.score_head};
    const char* store_names[] = {"encoder", "time_net", "cond_embed", "velocity_head",
                                 "score_head"};
    std::int64_t expected_offset = 0;
    for (const auto& entry : desc.at("manifest")) {
        check_known_keys(entry, {"store", "name", "shape", "offset", "count"}, "manifest entry");
        const auto store = get_required<std::string>(entry, "store", "manifest");
        const auto name = get_required<std::string>(entry, "name", "manifest");
        const auto shape = get_required<std::vector<std::int64_t>>(entry, "shape", "manifest");
        const auto offset = get_required<std::int64_t>(entry, "offset", "manifest");
        const auto count = get_required<std::int64_t>(entry, "count", "manifest");
        if (offset != expected_offset) throw CheckpointError("manifest offsets not contiguous");
        if (offset + count > payload_count) throw CheckpointError("manifest exceeds payload");
        expected_offset += count;

        ParameterStore* target = nullptr;
        for (std::size_t i = 0; i < 5; ++i)
            if (store == store_names[i]) target = stores[i];
        if (!target) throw CheckpointError("unknown store '" + store + "' in manifest");
        Vec values(count);
        std::memcpy(values.data(), payload + offset, static_cast<std::size_t>(count) * 8);
        try {
            target->add(name, shape, std::move(values));
        } catch (const ConfigError& e) {
            throw CheckpointError(std::string("bad manifest entry: ") + e.what());
        }
    }
    if (expected_offset != payload_count)
        throw CheckpointError("payload larger than the manifest describes");

    // structural sanity against the declared configuration
    try {
        check_mlp_params(out.model.encoder, out.model.config.encoder_cfg());
        check_mlp_params(out.model.time_net, out.model.config.time_cfg());
        check_mlp_params(out.model.velocity_head,
                         out.model.config.head_cfg(static_cast<int>(out.model.conditions.n_variables())));
        check_mlp_params(out.model.score_head,
                         out.model.config.head_cfg(static_cast<int>(out.model.conditions.n_variables())));
        for (std::size_t v = 0; v < out.model.conditions.n_variables(); ++v) {
            const auto& e = out.model.cond_embed.at(cond_embed_name(v));
            if (e.shape != std::vector<std::int64_t>{out.model.conditions.variables[v].cardinality + 1,
                                                     out.model.config.cond_embed_dim})
                throw ConfigError("embedding table shape mismatch");
        }
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint inconsistent: ") + e.what());
    }
    return out;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_bytes(bytes);
}

inline std::uint64_t checkpoint_hash(const FlowScoreModel& model,
                                     const TrainConfig* train_config = nullptr) {
    return fnv1a64(checkpoint_to_bytes(model, train_config));
}

}  // namespace ratioflow
