#include "evoact/model.hpp"

#include <cmath>

namespace evoact {

VlaModel::VlaModel(const RunConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    backbone_ = std::make_unique<Backbone>(cfg_.backbone, store_, rng);
    integration_ = std::make_unique<Integration>(cfg_.state_dim, cfg_.backbone.d_z, store_, rng);
    expert_ = std::make_unique<ActionExpert>(cfg_.dit, store_, rng);
}

std::vector<int> VlaModel::conditioning_layers() const {
    return required_layers(cfg_.dit.variant, cfg_.backbone.extract_layer, cfg_.backbone.layers, cfg_.dit.depth);
}

VlaModel::FeatureSnapshot VlaModel::compute_features(const std::vector<ObservationSet>& obs,
                                                     const std::vector<Instruction>& instr) {
    BackboneOut bb = backbone_->forward(obs, instr, store_);
    FeatureSnapshot snap;
    snap.z_tokens = bb.tokens;
    for (int layer : conditioning_layers()) snap.feats.push_back(Backbone::extract_z(bb, layer));
    return snap;
}

Tensor VlaModel::velocity(const VelocityInputs& in) {
    std::vector<Tensor> feats = in.feats;
    int z_tokens = in.z_tokens;
    if (feats.empty()) {
        if (in.obs == nullptr || in.instr == nullptr) {
            throw config_error("velocity: either observations or cached features required");
        }
        FeatureSnapshot snap = compute_features(*in.obs, *in.instr);
        feats = std::move(snap.feats);
        z_tokens = snap.z_tokens;
    }
    int batch = in.states_norm.rows();

    Tensor state_tokens = integration_->embed_state(in.states_norm, store_);
    Tensor action_tokens;
    if (cfg_.dit.variant == Variant::D) {
        action_tokens = expert_->embed_actions(in.a_noisy, store_, batch);
    }
    ConditioningBundle bundle =
        integration_->build(cfg_.dit.variant, feats, conditioning_layers(), state_tokens, batch, z_tokens,
                            cfg_.dit.depth, action_tokens);
    return expert_->forward(in.a_noisy, bundle, in.taus, store_);
}

std::vector<std::array<float, 3>> VlaModel::predict_chunk(const ObservationSet& obs, const Instruction& instr,
                                                          const RobotState& state, int sampler_steps, Rng& rng) {
    if (norm_.empty()) throw std::runtime_error("predict_chunk: normalization statistics not set");
    NoGradGuard ng;

    std::vector<ObservationSet> obs_v{obs};
    std::vector<Instruction> instr_v{instr};
    FeatureSnapshot snap = compute_features(obs_v, instr_v);

    std::vector<float> sn = norm_.normalize_state(state.values);
    std::vector<real> srow(sn.begin(), sn.end());
    Tensor states = Tensor::from(std::move(srow), {1, cfg_.state_dim});

    int h = cfg_.dit.horizon, da = cfg_.dit.action_dim;
    std::vector<real> noise(static_cast<std::size_t>(h) * da);
    for (auto& v : noise) v = static_cast<real>(rng.normal());
    Tensor a0 = Tensor::from(std::move(noise), {h, da});

    Tensor chunk = euler_integrate(a0,
                                   [&](const Tensor& a, double tau) {
                                       VelocityInputs vin;
                                       vin.feats = snap.feats;
                                       vin.z_tokens = snap.z_tokens;
                                       vin.states_norm = states;
                                       vin.a_noisy = a;
                                       vin.taus = {tau};
                                       return velocity(vin);
                                   },
                                   sampler_steps);

    std::vector<float> flat(chunk.vec().begin(), chunk.vec().end());
    flat = norm_.denormalize_action(flat);
    std::vector<std::array<float, 3>> actions;
    for (int k = 0; k < h; ++k) {
        actions.push_back({flat[static_cast<std::size_t>(k) * da],
                           flat[static_cast<std::size_t>(k) * da + 1],
                           flat[static_cast<std::size_t>(k) * da + 2]});
    }
    return actions;
}

std::int64_t VlaModel::expected_param_count(const RunConfig& cfg) {
    std::int64_t d = cfg.backbone.d_z;
    std::int64_t patch_dim = 3LL * cfg.backbone.patch_size * cfg.backbone.patch_size;
    std::int64_t d_patch = cfg.backbone.d_patch();

    std::int64_t vocab = static_cast<std::int64_t>(cfg.backbone.vocab) * d;
    std::int64_t pos = static_cast<std::int64_t>(cfg.backbone.max_seq) * d;
    std::int64_t patch = patch_dim * d_patch + d_patch;
    std::int64_t vproj = d * d + d;
    std::int64_t attn = 4 * (d * d + d);
    std::int64_t mlp = d * 4 * d + 4 * d + 4 * d * d + d;
    std::int64_t norms = 4 * d;  // two affine layer norms per block
    std::int64_t backbone = vocab + pos + patch + vproj + cfg.backbone.layers * (attn + mlp + norms);

    std::int64_t integration = static_cast<std::int64_t>(cfg.state_dim) * d + d;  // state embedding

    return backbone + integration + ActionExpert::count_params(cfg.dit);
}

}  // namespace evoact
