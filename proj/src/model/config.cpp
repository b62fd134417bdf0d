// SPDX-License-Identifier: Apache-2.0

#include "sfl/model/config.hpp"

#include <stdexcept>

#include <json.hpp>

namespace sfl::model {

void DenoiserConfig::validate() const {
    if (embed_dim < 8 || embed_dim % n_heads != 0) {
        throw std::invalid_argument("DenoiserConfig: embed_dim must be divisible by n_heads");
    }
    if (embed_dim % 8 != 0) {
        throw std::invalid_argument("DenoiserConfig: embed_dim must be divisible by 8 (3-axis positional split)");
    }
    if (n_blocks < 1 || max_frames < 1 || ref_capacity < 0) {
        throw std::invalid_argument("DenoiserConfig: counts must be positive");
    }
    if (s < 1 || image_height % s != 0 || image_width % s != 0) {
        throw std::invalid_argument("DenoiserConfig: image extents must be divisible by the latent factor");
    }
    if (hl() % 2 != 0 || wl() % 2 != 0) {
        throw std::invalid_argument("DenoiserConfig: latent grid must be divisible by the (1,2,2) patch");
    }
}

std::string DenoiserConfig::to_json() const {
    nlohmann::json j;
    j["embed_dim"] = embed_dim;
    j["n_heads"] = n_heads;
    j["n_blocks"] = n_blocks;
    j["max_frames"] = max_frames;
    j["s"] = s;
    j["image_height"] = image_height;
    j["image_width"] = image_width;
    j["ref_capacity"] = ref_capacity;
    j["ffn_mult"] = ffn_mult;
    j["pose_hidden"] = pose_hidden;
    j["dtype"] = dtype == num::DType::F32 ? "f32" : "f64";
    j["init_seed"] = init_seed;
    j["patch"] = {1, 2, 2};
    return j.dump(2);
}

DenoiserConfig DenoiserConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    DenoiserConfig c;
    c.embed_dim = j.at("embed_dim").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_blocks = j.at("n_blocks").get<int>();
    c.max_frames = j.at("max_frames").get<int>();
    c.s = j.at("s").get<int>();
    c.image_height = j.at("image_height").get<int>();
    c.image_width = j.at("image_width").get<int>();
    c.ref_capacity = j.at("ref_capacity").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    c.pose_hidden = j.at("pose_hidden").get<int>();
    c.dtype = j.at("dtype").get<std::string>() == "f32" ? num::DType::F32 : num::DType::F64;
    c.init_seed = j.at("init_seed").get<uint64_t>();
    c.validate();
    return c;
}

int64_t param_count(const DenoiserConfig& cfg) {
    int64_t d = cfg.embed_dim;
    int64_t f = cfg.ffn_dim();
    int64_t c4 = cfg.patch_dim();
    int64_t rdim = cfg.ray_token_dim();
    int64_t odim = cfg.opacity_token_dim();
    int64_t hp = cfg.pose_hidden;

    int64_t shared = c4 * d + d          // patch embedding
                     + 2 * (d * d + d)   // time MLP
                     + 2 * d             // final norm affine
                     + d * c4 + c4;      // output head
    int64_t per_block = 2 * (d * d + d)      // time modulation (scale, shift)
                        + 4 * (d * d + d)    // self-attention q,k,v,o
                        + 2 * d + 2 * d      // post-attention + pre-ffn norm affines
                        + rdim * d + d       // f_r
                        + odim * d + d       // f_o
                        + 4 * (d * d + d)    // cross-attention q,k,v,o
                        + 14 * hp + hp       // pose encoder layer 1
                        + hp * d + d         // pose encoder layer 2
                        + d * f + f          // ffn in
                        + f * d + d;         // ffn out
    return shared + cfg.n_blocks * per_block;
}

}  // namespace sfl::model
