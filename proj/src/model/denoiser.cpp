// SPDX-License-Identifier: Apache-2.0

#include "sfl/model/denoiser.hpp"

#include <cmath>
#include <memory>

#include "sfl/num/ops.hpp"
#include "sfl/num/rng.hpp"

namespace sfl::model {

using num::DType;
using num::Tensor;
using num::Var;

namespace {

constexpr double kInitStd = 0.02;

Tensor random_init(num::Rng& rng, std::vector<int64_t> shape, DType dt) {
    Tensor t = num::randn(rng, std::move(shape), dt);
    return num::ops::scale(t, kInitStd);
}

// Sinusoidal encoding of a scalar position into dim values (dim even).
void sincos_into(double pos, int dim, double scale_base, std::vector<double>& out, size_t offset) {
    for (int i = 0; i < dim / 2; ++i) {
        double freq = std::pow(scale_base, -2.0 * i / static_cast<double>(dim));
        out[offset + 2 * static_cast<size_t>(i)] = std::sin(pos * freq);
        out[offset + 2 * static_cast<size_t>(i) + 1] = std::cos(pos * freq);
    }
}

}  // namespace

Denoiser::Denoiser(DenoiserConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    init_params();
}

void Denoiser::init_params() {
    num::Rng rng(cfg_.init_seed);
    DType dt = cfg_.dtype;
    int64_t d = cfg_.embed_dim;
    int64_t f = cfg_.ffn_dim();
    int64_t c4 = cfg_.patch_dim();
    int64_t hp = cfg_.pose_hidden;

    auto zeros = [&](std::vector<int64_t> shape) { return Tensor::zeros(std::move(shape), dt); };
    auto rand = [&](std::vector<int64_t> shape) { return random_init(rng, std::move(shape), dt); };
    auto ones = [&](int64_t n) { return Tensor::full({n}, 1.0, dt); };

    embed_w_ = params_.add("embed/w", rand({c4, d}));
    embed_b_ = params_.add("embed/b", zeros({d}));
    time1_w_ = params_.add("time/w1", rand({d, d}));
    time1_b_ = params_.add("time/b1", zeros({d}));
    time2_w_ = params_.add("time/w2", rand({d, d}));
    time2_b_ = params_.add("time/b2", zeros({d}));

    blocks_.resize(static_cast<size_t>(cfg_.n_blocks));
    for (int b = 0; b < cfg_.n_blocks; ++b) {
        std::string p = "blk" + std::to_string(b) + "/";
        BlockIdx& ix = blocks_[static_cast<size_t>(b)];
        ix.tmod_s_w = params_.add(p + "tmod_scale/w", zeros({d, d}));
        ix.tmod_s_b = params_.add(p + "tmod_scale/b", zeros({d}));
        ix.tmod_h_w = params_.add(p + "tmod_shift/w", zeros({d, d}));
        ix.tmod_h_b = params_.add(p + "tmod_shift/b", zeros({d}));
        ix.wq = params_.add(p + "attn/wq", rand({d, d}));
        ix.bq = params_.add(p + "attn/bq", zeros({d}));
        ix.wk = params_.add(p + "attn/wk", rand({d, d}));
        ix.bk = params_.add(p + "attn/bk", zeros({d}));
        ix.wv = params_.add(p + "attn/wv", rand({d, d}));
        ix.bv = params_.add(p + "attn/bv", zeros({d}));
        ix.wo = params_.add(p + "attn/wo", rand({d, d}));
        ix.bo = params_.add(p + "attn/bo", zeros({d}));
        ix.ln_b_g = params_.add(p + "ln_b/g", ones(d));
        ix.ln_b_b = params_.add(p + "ln_b/b", zeros({d}));
        ix.ln_c_g = params_.add(p + "ln_c/g", ones(d));
        ix.ln_c_b = params_.add(p + "ln_c/b", zeros({d}));
        ix.fr_w = params_.add(p + "f_r/w", zeros({cfg_.ray_token_dim(), d}));
        ix.fr_b = params_.add(p + "f_r/b", zeros({d}));
        ix.fo_w = params_.add(p + "f_o/w", zeros({cfg_.opacity_token_dim(), d}));
        ix.fo_b = params_.add(p + "f_o/b", zeros({d}));
        ix.cq_w = params_.add(p + "cross/wq", rand({d, d}));
        ix.cq_b = params_.add(p + "cross/bq", zeros({d}));
        ix.ck_w = params_.add(p + "cross/wk", rand({d, d}));
        ix.ck_b = params_.add(p + "cross/bk", zeros({d}));
        ix.cv_w = params_.add(p + "cross/wv", zeros({d, d}));  // V_n zero-init
        ix.cv_b = params_.add(p + "cross/bv", zeros({d}));
        ix.co_w = params_.add(p + "cross/wo", rand({d, d}));
        ix.co_b = params_.add(p + "cross/bo", zeros({d}));
        ix.pose1_w = params_.add(p + "pose/w1", rand({14, hp}));
        ix.pose1_b = params_.add(p + "pose/b1", zeros({hp}));
        ix.pose2_w = params_.add(p + "pose/w2", zeros({hp, d}));  // zero-init output
        ix.pose2_b = params_.add(p + "pose/b2", zeros({d}));
        ix.ff1_w = params_.add(p + "ffn/w1", rand({d, f}));
        ix.ff1_b = params_.add(p + "ffn/b1", zeros({f}));
        ix.ff2_w = params_.add(p + "ffn/w2", rand({f, d}));
        ix.ff2_b = params_.add(p + "ffn/b2", zeros({d}));
    }
    lnf_g_ = params_.add("ln_f/g", ones(d));
    lnf_b_ = params_.add("ln_f/b", zeros({d}));
    head_w_ = params_.add("head/w", zeros({d, c4}));  // zero-init output head
    head_b_ = params_.add("head/b", zeros({c4}));
}

std::shared_ptr<const Denoiser::ForwardPlan> Denoiser::plan_for(int frames, int n_ref,
                                                                int first_frame_index) const {
    int fpos0 = ((first_frame_index % cfg_.max_frames) + cfg_.max_frames) % cfg_.max_frames;
    std::scoped_lock lock(plan_mutex_);
    auto key = std::make_tuple(frames, n_ref, fpos0);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;

    auto plan = std::make_shared<ForwardPlan>();
    const int tph = cfg_.tokens_per_frame();
    const int hl = cfg_.hl(), wl = cfg_.wl();
    const int rows = hl / 2, cols = wl / 2;
    const int64_t d = cfg_.embed_dim;
    const int64_t c = cfg_.latent_channels();
    const DType dt = cfg_.dtype;

    // (1,2,2) patch gather: token (f, tr, tc) packs cells (f, 2tr+dy, 2tc+dx).
    auto patch_map = std::make_shared<std::vector<int64_t>>();
    patch_map->reserve(static_cast<size_t>(frames) * tph * 4 * c);
    for (int fi = 0; fi < frames; ++fi) {
        for (int tr = 0; tr < rows; ++tr) {
            for (int tc = 0; tc < cols; ++tc) {
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        int64_t cell = (static_cast<int64_t>(fi) * hl + tr * 2 + dy) * wl + tc * 2 + dx;
                        for (int64_t ch = 0; ch < c; ++ch) patch_map->push_back(cell * c + ch);
                    }
                }
            }
        }
    }
    auto unpatch_map = std::make_shared<std::vector<int64_t>>(patch_map->size());
    for (size_t i = 0; i < patch_map->size(); ++i) {
        (*unpatch_map)[static_cast<size_t>((*patch_map)[i])] = static_cast<int64_t>(i);
    }
    plan->patch_map = patch_map;
    plan->unpatch_map = unpatch_map;

    auto frame_expand = std::make_shared<std::vector<int64_t>>();
    frame_expand->reserve(static_cast<size_t>(frames) * tph * d);
    for (int fi = 0; fi < frames; ++fi) {
        for (int tk = 0; tk < tph; ++tk) {
            for (int64_t k = 0; k < d; ++k) frame_expand->push_back(fi * d + k);
        }
    }
    plan->frame_expand = frame_expand;

    // Fixed 3D sinusoidal positional encoding over (frame, row, col); the
    // frame index wraps modulo max_frames so unbounded rollouts stay
    // in-distribution.
    int d_frame = cfg_.embed_dim / 2, d_row = cfg_.embed_dim / 4, d_col = cfg_.embed_dim / 4;
    plan->pe = Tensor::zeros({static_cast<int64_t>(frames) * tph, d}, dt);
    {
        std::vector<double> row(static_cast<size_t>(d), 0.0);
        for (int fi = 0; fi < frames; ++fi) {
            int fpos = (fpos0 + fi) % cfg_.max_frames;
            for (int tr = 0; tr < rows; ++tr) {
                for (int tc = 0; tc < cols; ++tc) {
                    sincos_into(fpos, d_frame, 10000.0, row, 0);
                    sincos_into(tr, d_row, 10000.0, row, static_cast<size_t>(d_frame));
                    sincos_into(tc, d_col, 10000.0, row, static_cast<size_t>(d_frame + d_row));
                    int64_t r = (static_cast<int64_t>(fi) * rows + tr) * cols + tc;
                    for (int64_t k = 0; k < d; ++k) plan->pe.set_flat(r * d + k, row[static_cast<size_t>(k)]);
                }
            }
        }
    }

    for (int fi = 0; fi < frames; ++fi) {
        auto fslice = std::make_shared<std::vector<int64_t>>();
        fslice->reserve(static_cast<size_t>(tph) * d);
        for (int tk = 0; tk < tph; ++tk) {
            int64_t base = (static_cast<int64_t>(fi) * tph + tk) * d;
            for (int64_t kk = 0; kk < d; ++kk) fslice->push_back(base + kk);
        }
        plan->frame_slices.push_back(std::move(fslice));
    }

    if (n_ref > 0) {
        plan->pe_ref = Tensor::zeros({static_cast<int64_t>(n_ref) * tph, d}, dt);
        std::vector<double> row(static_cast<size_t>(d), 0.0);
        for (int r = 0; r < n_ref; ++r) {
            for (int tr = 0; tr < rows; ++tr) {
                for (int tc = 0; tc < cols; ++tc) {
                    sincos_into(0, d_frame, 10000.0, row, 0);
                    sincos_into(tr, d_row, 10000.0, row, static_cast<size_t>(d_frame));
                    sincos_into(tc, d_col, 10000.0, row, static_cast<size_t>(d_frame + d_row));
                    int64_t rr = (static_cast<int64_t>(r) * rows + tr) * cols + tc;
                    for (int64_t k = 0; k < d; ++k) plan->pe_ref.set_flat(rr * d + k, row[static_cast<size_t>(k)]);
                }
            }
            auto rslice = std::make_shared<std::vector<int64_t>>();
            rslice->reserve(static_cast<size_t>(tph) * d);
            for (int tk = 0; tk < tph; ++tk) {
                int64_t base = (static_cast<int64_t>(r) * tph + tk) * d;
                for (int64_t kk = 0; kk < d; ++kk) rslice->push_back(base + kk);
            }
            plan->ref_slices.push_back(std::move(rslice));
        }
    }

    auto shared = std::shared_ptr<const ForwardPlan>(plan);
    plans_[key] = shared;
    return shared;
}

Var Denoiser::forward(num::Tape& tape, const Binding& binding, Var z_t, const ForwardArgs& args) const {
    if (!args.cond) throw std::invalid_argument("Denoiser::forward: conditioning tokens required");
    const CondTokens& cond = *args.cond;
    int frames = cond.frames;
    const int tph = cfg_.tokens_per_frame();
    const int hl = cfg_.hl(), wl = cfg_.wl();
    const int64_t d = cfg_.embed_dim;
    const int64_t c = cfg_.latent_channels();
    const DType dt = cfg_.dtype;

    const Tensor& zval = tape.value(z_t);
    if (zval.rank() != 2 || zval.dim(0) != static_cast<int64_t>(frames) * hl * wl || zval.dim(1) != c) {
        throw std::invalid_argument("Denoiser::forward: latent shape " + zval.shape_str() +
                                    " does not match config/conditioning");
    }
    std::vector<double> t_frames = args.t_frames;
    if (t_frames.size() == 1) t_frames.assign(static_cast<size_t>(frames), t_frames[0]);
    if (t_frames.size() != static_cast<size_t>(frames)) {
        throw std::invalid_argument("Denoiser::forward: need one t per frame");
    }
    if (args.record_cache && !args.cache) {
        throw std::invalid_argument("Denoiser::forward: record_cache without a cache");
    }

    auto P = [&](size_t idx) { return binding.vars[idx]; };
    auto plan = plan_for(frames, cond.n_ref, args.first_frame_index);

    // Patch embedding plus positions.
    Var x = tape.gather(z_t, {static_cast<int64_t>(frames) * tph, 4 * c}, plan->patch_map);
    x = tape.add_bias(tape.matmul(x, P(embed_w_)), P(embed_b_));
    x = tape.add(x, tape.constant(plan->pe));

    // Time embedding, one row per frame.
    Tensor temb_raw = Tensor::zeros({frames, d}, dt);
    {
        std::vector<double> row(static_cast<size_t>(d), 0.0);
        for (int fi = 0; fi < frames; ++fi) {
            sincos_into(t_frames[static_cast<size_t>(fi)] * 1000.0, cfg_.embed_dim, 10000.0, row, 0);
            for (int64_t k = 0; k < d; ++k) temb_raw.set_flat(fi * d + k, row[static_cast<size_t>(k)]);
        }
    }
    Var temb = tape.add_bias(tape.matmul(tape.constant(temb_raw), P(time1_w_)), P(time1_b_));
    temb = tape.silu(temb);
    temb = tape.add_bias(tape.matmul(temb, P(time2_w_)), P(time2_b_));

    std::vector<int64_t> tok_shape = {static_cast<int64_t>(frames) * tph, d};

    // Reference tokens through the shared patch embedding (query positions).
    Var ref_emb{};
    if (cond.n_ref > 0) {
        ref_emb = tape.add_bias(tape.matmul(tape.constant(cond.ref_patches), P(embed_w_)), P(embed_b_));
        ref_emb = tape.add(ref_emb, tape.constant(plan->pe_ref));
    }

    int64_t prefix = args.cache ? args.cache->prefix_tokens() : 0;
    std::shared_ptr<const Tensor> self_bias;
    if (args.self_bias_override) {
        self_bias = args.self_bias_override;
        if (self_bias->dim(0) != static_cast<int64_t>(frames) * tph ||
            self_bias->dim(1) != prefix + static_cast<int64_t>(frames) * tph) {
            throw std::invalid_argument("Denoiser::forward: self_bias_override shape mismatch");
        }
    } else if (args.mode == causal::AttnMode::BlockCausal) {
        self_bias = std::make_shared<Tensor>(causal::attention_bias(frames, tph, prefix, args.mode, dt));
    }
    if (args.record_cache) args.cache->begin_append(args.first_frame_index, frames);

    for (int b = 0; b < cfg_.n_blocks; ++b) {
        const BlockIdx& ix = blocks_[static_cast<size_t>(b)];

        // Self-attention sublayer with per-frame time modulation.
        Var scale_f = tape.add_bias(tape.matmul(temb, P(ix.tmod_s_w)), P(ix.tmod_s_b));
        Var shift_f = tape.add_bias(tape.matmul(temb, P(ix.tmod_h_w)), P(ix.tmod_h_b));
        Var scale = tape.gather(scale_f, tok_shape, plan->frame_expand);
        Var shift = tape.gather(shift_f, tok_shape, plan->frame_expand);
        Var h = tape.layer_norm(x);
        h = tape.add(tape.add(h, tape.mul(h, scale)), shift);
        Var q = tape.add_bias(tape.matmul(h, P(ix.wq)), P(ix.bq));
        Var k = tape.add_bias(tape.matmul(h, P(ix.wk)), P(ix.bk));
        Var v = tape.add_bias(tape.matmul(h, P(ix.wv)), P(ix.bv));
        Var k_all = k, v_all = v;
        if (prefix > 0) {
            k_all = tape.concat_rows({tape.constant(args.cache->keys(b)), k});
            v_all = tape.concat_rows({tape.constant(args.cache->values(b)), v});
        }
        Var attn = tape.multihead_attention(q, k_all, v_all, cfg_.n_heads, self_bias);
        attn = tape.add_bias(tape.matmul(attn, P(ix.wo)), P(ix.bo));
        x = tape.add(x, attn);
        if (args.record_cache) args.cache->append(b, tape.value(k), tape.value(v));

        // T_s: tokens after self-attention and layer norm.
        Var ts = tape.add_bias(tape.mul_rowvec(tape.layer_norm(x), P(ix.ln_b_g)), P(ix.ln_b_b));

        // Raymap / opacity injection (zero-initialized per-block linears).
        Var inj_r = tape.add_bias(tape.matmul(tape.constant(cond.ray_tokens), P(ix.fr_w)), P(ix.fr_b));
        Var inj_o = tape.add_bias(tape.matmul(tape.constant(cond.opacity_tokens), P(ix.fo_w)), P(ix.fo_b));
        Var to = tape.add(tape.add(ts, inj_r), inj_o);

        // Reference cross-attention; keys carry per-(frame, reference)
        // relative-pose encodings, values are shared.
        if (cond.n_ref > 0) {
            Var v_ref = tape.add_bias(tape.matmul(ref_emb, P(ix.cv_w)), P(ix.cv_b));
            std::vector<Var> parts;
            parts.reserve(static_cast<size_t>(frames));
            for (int fi = 0; fi < frames; ++fi) {
                Var to_f = tape.gather(to, {tph, d}, plan->frame_slices[static_cast<size_t>(fi)]);
                Var q_f = tape.add_bias(tape.matmul(to_f, P(ix.cq_w)), P(ix.cq_b));
                std::vector<Var> kin_parts;
                for (int r = 0; r < cond.n_ref; ++r) {
                    Tensor pose_vec = Tensor::zeros({1, 14}, dt);
                    for (int64_t i = 0; i < 14; ++i) {
                        pose_vec.set_flat(i, cond.rel_pose.flat((static_cast<int64_t>(fi) * cond.n_ref + r) * 14 + i));
                    }
                    Var penc = tape.add_bias(tape.matmul(tape.constant(pose_vec), P(ix.pose1_w)), P(ix.pose1_b));
                    penc = tape.silu(penc);
                    penc = tape.add_bias(tape.matmul(penc, P(ix.pose2_w)), P(ix.pose2_b));
                    Var penc_vec = tape.reshape(penc, {d});
                    Var ref_r = tape.gather(ref_emb, {tph, d}, plan->ref_slices[static_cast<size_t>(r)]);
                    kin_parts.push_back(tape.add_bias(ref_r, penc_vec));
                }
                Var kin = kin_parts.size() == 1 ? kin_parts[0] : tape.concat_rows(kin_parts);
                Var k_f = tape.add_bias(tape.matmul(kin, P(ix.ck_w)), P(ix.ck_b));
                Var attn_f = tape.multihead_attention(q_f, k_f, v_ref, cfg_.n_heads);
                parts.push_back(tape.add_bias(tape.matmul(attn_f, P(ix.co_w)), P(ix.co_b)));
            }
            Var cross = parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
            x = tape.add(to, cross);
        } else {
            x = to;  // zero references: the op is the identity
        }

        // Feed-forward sublayer.
        Var h2 = tape.add_bias(tape.mul_rowvec(tape.layer_norm(x), P(ix.ln_c_g)), P(ix.ln_c_b));
        h2 = tape.add_bias(tape.matmul(h2, P(ix.ff1_w)), P(ix.ff1_b));
        h2 = tape.gelu(h2);
        h2 = tape.add_bias(tape.matmul(h2, P(ix.ff2_w)), P(ix.ff2_b));
        x = tape.add(x, h2);
    }
    if (args.record_cache) args.cache->end_append();

    Var y = tape.add_bias(tape.mul_rowvec(tape.layer_norm(x), P(lnf_g_)), P(lnf_b_));
    y = tape.add_bias(tape.matmul(y, P(head_w_)), P(head_b_));
    return tape.gather(y, {static_cast<int64_t>(frames) * hl * wl, c}, plan->unpatch_map);
}

Tensor Denoiser::forward_tensor(const Tensor& z_t, const ForwardArgs& args) const {
    num::Tape tape;
    tape.set_grad_enabled(false);
    Binding binding = bind(tape, false);
    Var z = tape.constant(z_t);
    Var out = forward(tape, binding, z, args);
    return tape.value(out);
}

void Denoiser::load_weights_from(const Denoiser& other) {
    if (params_.count() != other.params_.count()) {
        throw std::invalid_argument("load_weights_from: parameter sets differ");
    }
    for (size_t i = 0; i < params_.count(); ++i) {
        if (params_.name_at(i) != other.params_.name_at(i) ||
            !params_.value_at(i).same_shape(other.params_.value_at(i))) {
            throw std::invalid_argument("load_weights_from: mismatch at '" + params_.name_at(i) + "'");
        }
        params_.value_at(i) = other.params_.value_at(i);
    }
}

}  // namespace sfl::model
