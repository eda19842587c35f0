#include "evoact/trainer.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace evoact {

using nlohmann::json;

Trainer::Trainer(VlaModel& model, const DemoDataset& data, std::string run_dir)
    : model_(model), data_(data), run_dir_(std::move(run_dir)), rng_(model.config().seed ^ 0x7261696E) {
    if (data_.tuples.empty()) throw std::runtime_error("trainer: empty dataset");
    if (data_.horizon != model_.config().dit.horizon || data_.action_dim != model_.config().dit.action_dim ||
        data_.state_dim != model_.config().state_dim) {
        throw config_error("trainer: dataset geometry (h=" + std::to_string(data_.horizon) + ", d_a=" +
                           std::to_string(data_.action_dim) + ", d_s=" + std::to_string(data_.state_dim) +
                           ") does not match model config");
    }
    std::filesystem::create_directories(run_dir_);
    manifest_path_ = run_dir_ + "/manifest.jsonl";
    if (model_.norm().empty()) model_.set_norm(compute_norm_stats(data_));
}

Trainer::FeatureCache Trainer::build_feature_cache() {
    NoGradGuard ng;
    FeatureCache cache;
    auto layers = model_.conditioning_layers();
    cache.per_layer.resize(layers.size());

    const int chunk = 32;  // tuples per backbone pass
    int n = static_cast<int>(data_.tuples.size());
    for (int begin = 0; begin < n; begin += chunk) {
        int count = std::min(chunk, n - begin);
        std::vector<ObservationSet> obs;
        std::vector<Instruction> instr;
        for (int i = 0; i < count; ++i) {
            obs.push_back(data_.observation(static_cast<std::size_t>(begin + i)));
            instr.push_back(data_.instruction(static_cast<std::size_t>(begin + i)));
        }
        VlaModel::FeatureSnapshot snap = model_.compute_features(obs, instr);
        cache.z_tokens = snap.z_tokens;
        for (std::size_t li = 0; li < snap.feats.size(); ++li) {
            const auto& v = snap.feats[li].vec();
            cache.per_layer[li].insert(cache.per_layer[li].end(), v.begin(), v.end());
        }
    }
    return cache;
}

TrainOutcome Trainer::run_stage(int stage, int steps) {
    const RunConfig& cfg = model_.config();
    ParamStore& store = model_.store();

    // A zero stage-2 backbone rate degenerates to the stage-1 freeze (the
    // optimizer itself rejects nonpositive rates).
    bool backbone_frozen = stage == 1 || (stage == 2 && cfg.train.lr2_backbone == 0.0);
    store.freeze_prefix("", false);
    if (backbone_frozen) store.freeze_prefix("backbone.", true);

    double base_backbone_lr = stage == 1 ? cfg.train.lr_stage1 : cfg.train.lr2_backbone;
    double base_expert_lr = stage == 1 ? cfg.train.lr_stage1 : cfg.train.lr2_expert;
    if (backbone_frozen && base_backbone_lr == 0.0) base_backbone_lr = base_expert_lr;  // unused by frozen params

    FeatureCache cache;
    bool cached = backbone_frozen;
    if (cached) cache = build_feature_cache();

    std::ofstream manifest(manifest_path_, std::ios::app);
    if (!manifest) throw std::runtime_error("trainer: cannot write " + manifest_path_);

    int b = cfg.train.batch;
    int h = cfg.dit.horizon, da = cfg.dit.action_dim, ds = cfg.state_dim, d = cfg.backbone.d_z;
    const NormStats& norm = model_.norm();
    auto layers = model_.conditioning_layers();

    TrainOutcome outcome;
    double first_sum = 0, last_sum = 0;
    int first_n = 0;
    std::vector<double> last_window;

    AdamConfig adam;
    for (int step = 0; step < steps; ++step) {
        auto t0 = std::chrono::steady_clock::now();

        std::vector<int> idx;
        for (int i = 0; i < b; ++i) idx.push_back(static_cast<int>(rng_.uniform_below(data_.tuples.size())));

        std::vector<real> states(static_cast<std::size_t>(b) * ds);
        std::vector<real> targets(static_cast<std::size_t>(b) * h * da);
        std::vector<real> noisy(static_cast<std::size_t>(b) * h * da);
        std::vector<real> flow_u(static_cast<std::size_t>(b) * h * da);
        std::vector<double> taus;
        for (int i = 0; i < b; ++i) {
            const DemoTuple& tp = data_.tuples[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            auto sn = norm.normalize_state(tp.state);
            std::copy(sn.begin(), sn.end(), states.begin() + static_cast<std::ptrdiff_t>(i) * ds);
            auto an = norm.normalize_action(tp.actions);
            double tau = sample_tau(rng_, cfg.flow.beta_alpha, cfg.flow.beta_beta);
            taus.push_back(tau);
            std::size_t off = static_cast<std::size_t>(i) * h * da;
            for (std::size_t k = 0; k < an.size(); ++k) {
                real a = static_cast<real>(an[k]);
                real eps = static_cast<real>(rng_.normal());
                targets[off + k] = a;
                noisy[off + k] = static_cast<real>(tau) * a + static_cast<real>(1.0 - tau) * eps;
                flow_u[off + k] = a - eps;
            }
        }

        VlaModel::VelocityInputs vin;
        vin.states_norm = Tensor::from(std::move(states), {b, ds});
        vin.a_noisy = Tensor::from(std::move(noisy), {b * h, da});
        vin.taus = taus;

        std::vector<ObservationSet> obs_batch;
        std::vector<Instruction> instr_batch;
        if (cached) {
            vin.z_tokens = cache.z_tokens;
            std::size_t rows = static_cast<std::size_t>(cache.z_tokens) * d;
            for (std::size_t li = 0; li < layers.size(); ++li) {
                std::vector<real> feat(static_cast<std::size_t>(b) * rows);
                for (int i = 0; i < b; ++i) {
                    std::memcpy(feat.data() + static_cast<std::size_t>(i) * rows,
                                cache.per_layer[li].data() +
                                    static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) * rows,
                                rows * sizeof(real));
                }
                vin.feats.push_back(Tensor::from(std::move(feat), {b * cache.z_tokens, d}));
            }
        } else {
            for (int i = 0; i < b; ++i) {
                obs_batch.push_back(data_.observation(static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])));
                instr_batch.push_back(data_.instruction(static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])));
            }
            vin.obs = &obs_batch;
            vin.instr = &instr_batch;
        }

        store.zero_grads();
        Tensor v = model_.velocity(vin);
        Tensor u = Tensor::from(std::move(flow_u), {b * h, da});
        Tensor loss = fm_loss(v, u);
        double loss_val = loss.value();
        if (!std::isfinite(loss_val)) throw TrainAbort(global_step_);
        backward(loss);

        double warm = cfg.train.warmup > 0 ? std::min(1.0, static_cast<double>(step + 1) / cfg.train.warmup) : 1.0;
        double lr_backbone = base_backbone_lr * warm;
        double lr_expert = base_expert_lr * warm;
        store.adamw_step(adam, [&](const std::string& name) {
            return name.rfind("backbone.", 0) == 0 ? lr_backbone : lr_expert;
        });

        auto t1 = std::chrono::steady_clock::now();
        double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        json line{{"step", global_step_},
                  {"stage", stage == 0 ? "single" : std::to_string(stage)},
                  {"loss", loss_val},
                  {"lr", lr_expert},
                  {"wall_ms", wall_ms}};
        manifest << line.dump() << "\n";

        if (step < 50) {
            first_sum += loss_val;
            ++first_n;
        }
        last_window.push_back(loss_val);
        if (last_window.size() > 50) last_window.erase(last_window.begin());
        outcome.last_loss = loss_val;
        ++global_step_;
        ++outcome.steps_done;
    }

    outcome.first_window_loss = first_n ? first_sum / first_n : 0;
    if (!last_window.empty()) {
        double s = 0;
        for (double v2 : last_window) s += v2;
        outcome.last_window_loss = s / static_cast<double>(last_window.size());
    }
    return outcome;
}

CheckpointData Trainer::make_checkpoint(std::uint32_t stage) const {
    CheckpointData data;
    // Run placement (id, output root) is per-invocation metadata, not part
    // of the model; stripping it keeps checkpoints byte-identical across
    // reruns into different run directories.
    RunConfig snapshot = model_.config();
    snapshot.run_id.clear();
    snapshot.out_dir = "runs";
    data.config_json = config_to_json(snapshot).dump();
    data.rng_algorithm = Rng::kAlgorithm;
    data.rng_seed = rng_.seed();
    data.rng_counter = rng_.counter();
    data.stage = stage;
    data.step = global_step_;
    data.norm = model_.norm();
    collect_params(model_.store(), data);
    return data;
}

void Trainer::save(const std::string& path, std::uint32_t stage) const {
    save_checkpoint_file(path, make_checkpoint(stage));
}

std::unique_ptr<VlaModel> model_from_checkpoint(const CheckpointData& ckpt) {
    if (ckpt.rng_algorithm != Rng::kAlgorithm) {
        throw checkpoint_error("checkpoint rng algorithm '" + ckpt.rng_algorithm + "' not supported");
    }
    RunConfig cfg = config_from_json(json::parse(ckpt.config_json));
    auto model = std::make_unique<VlaModel>(cfg, cfg.seed);
    apply_params(ckpt, model->store());
    model->set_norm(ckpt.norm);
    return model;
}

PolicyFn model_policy(VlaModel& model, int sampler_steps, Rng& rng) {
    return [&model, sampler_steps, &rng](const ObservationSet& obs, const Instruction& instr,
                                         const RobotState& state) {
        return model.predict_chunk(obs, instr, state, sampler_steps, rng);
    };
}

namespace {

double cosine_or_exact(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw config_error("attention_drift: map sizes differ");
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0) return 1.0;
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

DriftReport attention_drift(VlaModel& ref, VlaModel& cur, Task task, int probes, std::uint64_t seed) {
    const RunConfig& ca = ref.config();
    const RunConfig& cb = cur.config();
    if (ca.backbone.layers != cb.backbone.layers || ca.backbone.d_z != cb.backbone.d_z ||
        ca.backbone.n_heads != cb.backbone.n_heads || ca.backbone.extract_layer != cb.backbone.extract_layer) {
        throw config_error("attention_drift: architecture mismatch between models");
    }
    if (probes < 1) throw config_error("attention_drift: probes must be >= 1");

    NoGradGuard ng;
    int layers = ca.backbone.layers;
    std::vector<double> sums(static_cast<std::size_t>(layers), 0.0);
    for (int i = 0; i < probes; ++i) {
        ToyEnv env(task, seed + static_cast<std::uint64_t>(i), ca.env);
        std::vector<ObservationSet> obs{env.observe()};
        std::vector<Instruction> instr{env.instruction()};
        BackboneOut oa = ref.backbone().forward(obs, instr, ref.store(), true);
        BackboneOut ob = cur.backbone().forward(obs, instr, cur.store(), true);
        for (int l = 0; l < layers; ++l) {
            sums[static_cast<std::size_t>(l)] += cosine_or_exact(oa.maps[static_cast<std::size_t>(l)].weights,
                                                                 ob.maps[static_cast<std::size_t>(l)].weights);
        }
    }
    DriftReport report;
    for (double s : sums) report.per_layer.push_back(s / probes);
    report.layer_k = report.per_layer[static_cast<std::size_t>(ca.backbone.extract_layer - 1)];
    return report;
}

}  // namespace evoact
