#include "evoact/config.hpp"

#include <fstream>

namespace evoact {

using nlohmann::json;

void RunConfig::validate() const {
    backbone.validate();
    dit.validate();
    if (dit.width != backbone.d_z) {
        throw config_error("dit.width (" + std::to_string(dit.width) + ") must equal backbone.d_z (" +
                           std::to_string(backbone.d_z) + ")");
    }
    if (flow.beta_alpha <= 0 || flow.beta_beta <= 0) throw config_error("flow: beta shape parameters must be positive");
    if (!(flow.clamp_lo < flow.clamp_hi) || flow.clamp_lo < 0 || flow.clamp_hi > 1) {
        throw config_error("flow: clamp range must satisfy 0 <= lo < hi <= 1");
    }
    if (sampler_steps < 1) throw config_error("sampler.steps must be >= 1");
    if (train.stage1_steps < 0 || train.stage2_steps < 0 || train.batch < 1) {
        throw config_error("train: steps must be >= 0 and batch >= 1");
    }
    if (train.lr_stage1 <= 0 || train.lr2_backbone < 0 || train.lr2_expert <= 0) {
        throw config_error("train: learning rates must be positive (stage-2 backbone rate may be zero)");
    }
    if (train.warmup < 0) throw config_error("train.warmup must be >= 0");
    if (state_dim < 1) throw config_error("state_dim must be >= 1");
    if (env.max_steps < 1 || env.image_size < 8 || env.views < 1) throw config_error("env: invalid geometry");
    if (env.image_size != backbone.image_size || env.views != backbone.views) {
        throw config_error("env image size/views must match backbone configuration");
    }
    if (replan_every < 0 || replan_every > dit.horizon) {
        throw config_error("replan_every must lie in [0, chunk.h]");
    }
}

json config_to_json(const RunConfig& c) {
    return json{
        {"backbone",
         {{"d_z", c.backbone.d_z},
          {"layers", c.backbone.layers},
          {"extract_layer", c.backbone.extract_layer},
          {"heads", c.backbone.n_heads},
          {"patch_size", c.backbone.patch_size},
          {"unshuffle", c.backbone.unshuffle},
          {"vocab", c.backbone.vocab},
          {"image_size", c.backbone.image_size},
          {"views", c.backbone.views},
          {"max_seq", c.backbone.max_seq}}},
        {"dit",
         {{"depth", c.dit.depth}, {"width", c.dit.width}, {"heads", c.dit.n_heads}, {"time_dim", c.dit.time_dim}}},
        {"integration", {{"variant", to_string(c.dit.variant)}}},
        {"chunk", {{"h", c.dit.horizon}}},
        {"action", {{"dim", c.dit.action_dim}}},
        {"flow",
         {{"beta_alpha", c.flow.beta_alpha},
          {"beta_beta", c.flow.beta_beta},
          {"clamp", {c.flow.clamp_lo, c.flow.clamp_hi}}}},
        {"sampler", {{"steps", c.sampler_steps}}},
        {"train",
         {{"stage1_steps", c.train.stage1_steps},
          {"stage2_steps", c.train.stage2_steps},
          {"batch", c.train.batch},
          {"lr_stage1", c.train.lr_stage1},
          {"lr2_backbone", c.train.lr2_backbone},
          {"lr2_expert", c.train.lr2_expert},
          {"warmup", c.train.warmup}}},
        {"env",
         {{"image_size", c.env.image_size},
          {"views", c.env.views},
          {"max_steps", c.env.max_steps},
          {"distractors", c.env.distractors}}},
        {"state", {{"dim", c.state_dim}}},
        {"replan_every", c.replan_every},
        {"run_id", c.run_id},
        {"out_dir", c.out_dir},
        {"seed", c.seed},
    };
}

namespace {

// Pulls a known key, marking it consumed so leftovers can be rejected.
template <typename T>
void take(json& obj, const char* key, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    out = it->get<T>();
    obj.erase(it);
}

void expect_empty(const json& obj, const std::string& scope) {
    if (!obj.empty()) {
        std::string keys;
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (!keys.empty()) keys += ", ";
            keys += it.key();
        }
        throw config_error("unknown config key(s) under '" + scope + "': " + keys);
    }
}

json take_group(json& root, const char* key) {
    auto it = root.find(key);
    if (it == root.end()) return json::object();
    if (!it->is_object()) throw config_error(std::string("config key '") + key + "' must be an object");
    json group = *it;
    root.erase(it);
    return group;
}

}  // namespace

RunConfig config_from_json(const json& input) {
    if (!input.is_object()) throw config_error("config root must be a JSON object");
    RunConfig c;
    json root = input;

    json b = take_group(root, "backbone");
    take(b, "d_z", c.backbone.d_z);
    take(b, "layers", c.backbone.layers);
    take(b, "extract_layer", c.backbone.extract_layer);
    take(b, "heads", c.backbone.n_heads);
    take(b, "patch_size", c.backbone.patch_size);
    take(b, "unshuffle", c.backbone.unshuffle);
    take(b, "vocab", c.backbone.vocab);
    take(b, "image_size", c.backbone.image_size);
    take(b, "views", c.backbone.views);
    take(b, "max_seq", c.backbone.max_seq);
    expect_empty(b, "backbone");

    json d = take_group(root, "dit");
    take(d, "depth", c.dit.depth);
    take(d, "width", c.dit.width);
    take(d, "heads", c.dit.n_heads);
    take(d, "time_dim", c.dit.time_dim);
    expect_empty(d, "dit");

    json integ = take_group(root, "integration");
    {
        std::string v = to_string(c.dit.variant);
        take(integ, "variant", v);
        c.dit.variant = variant_from_string(v);
    }
    expect_empty(integ, "integration");

    json chunk = take_group(root, "chunk");
    take(chunk, "h", c.dit.horizon);
    expect_empty(chunk, "chunk");

    json action = take_group(root, "action");
    take(action, "dim", c.dit.action_dim);
    expect_empty(action, "action");

    json f = take_group(root, "flow");
    take(f, "beta_alpha", c.flow.beta_alpha);
    take(f, "beta_beta", c.flow.beta_beta);
    if (f.contains("clamp")) {
        auto clamp = f.at("clamp");
        if (!clamp.is_array() || clamp.size() != 2) throw config_error("flow.clamp must be [lo, hi]");
        c.flow.clamp_lo = clamp[0].get<double>();
        c.flow.clamp_hi = clamp[1].get<double>();
        f.erase("clamp");
    }
    expect_empty(f, "flow");

    json s = take_group(root, "sampler");
    take(s, "steps", c.sampler_steps);
    expect_empty(s, "sampler");

    json t = take_group(root, "train");
    take(t, "stage1_steps", c.train.stage1_steps);
    take(t, "stage2_steps", c.train.stage2_steps);
    take(t, "batch", c.train.batch);
    take(t, "lr_stage1", c.train.lr_stage1);
    take(t, "lr2_backbone", c.train.lr2_backbone);
    take(t, "lr2_expert", c.train.lr2_expert);
    take(t, "warmup", c.train.warmup);
    expect_empty(t, "train");

    json e = take_group(root, "env");
    take(e, "image_size", c.env.image_size);
    take(e, "views", c.env.views);
    take(e, "max_steps", c.env.max_steps);
    take(e, "distractors", c.env.distractors);
    expect_empty(e, "env");

    json st = take_group(root, "state");
    take(st, "dim", c.state_dim);
    expect_empty(st, "state");

    take(root, "replan_every", c.replan_every);
    take(root, "run_id", c.run_id);
    take(root, "out_dir", c.out_dir);
    take(root, "seed", c.seed);
    expect_empty(root, "<root>");

    c.validate();
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw config_error("config parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace evoact
