#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "evoact/bench.hpp"
#include "evoact/trainer.hpp"

using namespace evoact;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string run_id;
};

RunConfig resolve_config(const GlobalOpts& g, const std::string& default_run_id) {
    RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config_file(g.config_path);
    if (g.seed_set) cfg.seed = g.seed;
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (!g.run_id.empty())
        cfg.run_id = g.run_id;
    else if (cfg.run_id.empty())
        cfg.run_id = default_run_id;
    cfg.validate();
    return cfg;
}

std::string prepare_run_dir(const RunConfig& cfg) {
    std::string dir = cfg.out_dir + "/" + cfg.run_id;
    fs::create_directories(dir);
    std::ofstream out(dir + "/config.json");
    out << config_to_json(cfg).dump(2) << "\n";
    return dir;
}

void write_eval_log(const std::string& path, const EvalResult& res) {
    std::ofstream out(path);
    for (const auto& ep : res.episodes) {
        out << json{{"seed", ep.seed}, {"steps", ep.steps}, {"success", ep.success}}.dump() << "\n";
    }
}

NormStats identity_norm(const RunConfig& cfg) {
    NormStats ns;
    ns.action_mean.assign(static_cast<std::size_t>(cfg.dit.action_dim), 0.0);
    ns.action_std.assign(static_cast<std::size_t>(cfg.dit.action_dim), 1.0);
    ns.state_mean.assign(static_cast<std::size_t>(cfg.state_dim), 0.0);
    ns.state_std.assign(static_cast<std::size_t>(cfg.state_dim), 1.0);
    return ns;
}

int cmd_gen_data(const GlobalOpts& g, const std::string& task_name, int n, std::string out_file) {
    RunConfig cfg = resolve_config(g, "gen-" + task_name + "-seed");
    Task task = task_from_string(task_name);
    std::string dir = prepare_run_dir(cfg);
    if (out_file.empty()) out_file = dir + "/demos_" + task_name + ".jsonl";
    DemoGenResult res = generate_demos(task, n, cfg.seed, out_file, cfg.dit.horizon, cfg.env);
    DemoDataset ds = load_demos(out_file);
    NormStats ns = compute_norm_stats(ds);
    std::cout << "wrote " << res.episodes << " episodes (" << res.tuples << " tuples, " << res.attempts
              << " attempts) to " << res.jsonl_path << "\n";
    std::cout << "sidecar: " << res.sidecar_path << "\n";
    std::cout << "action mean/std per dim:";
    for (std::size_t i = 0; i < ns.action_mean.size(); ++i) {
        std::cout << " " << ns.action_mean[i] << "/" << ns.action_std[i];
    }
    std::cout << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data_path, const std::string& stage_name,
              const std::string& from_ckpt, std::string ckpt_out, int steps_override) {
    if (stage_name != "1" && stage_name != "2" && stage_name != "single") {
        throw config_error("--stage must be 1, 2, or single");
    }
    if (stage_name == "2" && from_ckpt.empty()) {
        throw config_error("--stage 2 requires --from <stage-1 checkpoint>");
    }

    DemoDataset data = load_demos(data_path);

    std::unique_ptr<VlaModel> model;
    RunConfig cfg;
    if (stage_name == "2") {
        CheckpointData ckpt = load_checkpoint_file(from_ckpt);
        model = model_from_checkpoint(ckpt);
        cfg = model->config();
        if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
        cfg.run_id = g.run_id.empty() ? ("train-stage2-seed" + std::to_string(cfg.seed)) : g.run_id;
        std::string dir = prepare_run_dir(cfg);
        Trainer trainer(*model, data, dir);
        trainer.set_rng(Rng(ckpt.rng_seed, ckpt.rng_counter));
        trainer.set_global_step(ckpt.step);
        int steps = steps_override > 0 ? steps_override : cfg.train.stage2_steps;
        TrainOutcome out = trainer.run_stage(2, steps);
        if (ckpt_out.empty()) ckpt_out = dir + "/stage2.ckpt";
        trainer.save(ckpt_out, 2);
        std::cout << "stage 2 done: " << out.steps_done << " steps, last loss " << out.last_loss << "\n";
        std::cout << "checkpoint: " << ckpt_out << "\n";
        return 0;
    }

    cfg = resolve_config(g, "train-stage" + stage_name + "-seed");
    cfg.run_id = g.run_id.empty() ? ("train-stage" + stage_name + "-seed" + std::to_string(cfg.seed)) : cfg.run_id;
    std::string dir = prepare_run_dir(cfg);
    model = std::make_unique<VlaModel>(cfg, cfg.seed);
    Trainer trainer(*model, data, dir);
    trainer.save(dir + "/init.ckpt", 0);

    int stage = stage_name == "1" ? 1 : 0;
    int steps = steps_override > 0 ? steps_override
                                   : (stage == 1 ? cfg.train.stage1_steps
                                                 : cfg.train.stage1_steps + cfg.train.stage2_steps);
    TrainOutcome out = trainer.run_stage(stage, steps);
    if (ckpt_out.empty()) ckpt_out = dir + (stage == 1 ? "/stage1.ckpt" : "/single.ckpt");
    trainer.save(ckpt_out, stage == 1 ? 1 : 0);
    std::cout << "stage " << stage_name << " done: " << out.steps_done << " steps, loss first50 "
              << out.first_window_loss << " -> last50 " << out.last_window_loss << "\n";
    std::cout << "checkpoint: " << ckpt_out << "\n";
    std::cout << "init snapshot: " << dir << "/init.ckpt\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt_path, const std::string& task_name, int trials,
             int replan_every) {
    CheckpointData ckpt = load_checkpoint_file(ckpt_path);
    auto model = model_from_checkpoint(ckpt);
    RunConfig cfg = model->config();
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    cfg.run_id = g.run_id.empty() ? ("eval-" + task_name + "-seed" + std::to_string(g.seed_set ? g.seed : cfg.seed))
                                  : g.run_id;
    std::string dir = prepare_run_dir(cfg);

    std::uint64_t seed = g.seed_set ? g.seed : cfg.seed;
    Task task = task_from_string(task_name);
    Rng policy_rng(seed ^ 0xE7A1);
    EvalResult res = evaluate_policy(task, trials, seed + 9000, model_policy(*model, cfg.sampler_steps, policy_rng),
                                     cfg.dit.horizon, replan_every > 0 ? replan_every : cfg.replan_every, cfg.env);
    std::string log_path = dir + "/eval.jsonl";
    write_eval_log(log_path, res);
    std::cout << "success rate: " << res.success_rate << " over " << trials << " trials\n";
    std::cout << "per-episode log: " << log_path << "\n";
    return 0;
}

int cmd_ablate(const GlobalOpts& g, std::vector<std::string> task_names, const std::string& variants_str,
               std::vector<std::uint64_t> seeds, int demos, int trials, int steps1, int steps2) {
    RunConfig cfg = resolve_config(g, "ablate-seed");
    if (task_names.empty()) task_names = {"pickplace"};
    if (seeds.empty()) seeds = {1, 2, 3};
    if (steps1 > 0) cfg.train.stage1_steps = steps1;
    if (steps2 > 0) cfg.train.stage2_steps = steps2;
    std::string dir = prepare_run_dir(cfg);

    std::vector<Task> tasks;
    for (const auto& t : task_names) tasks.push_back(task_from_string(t));
    std::vector<Variant> variants;
    for (char c : variants_str) {
        if (c == ',') continue;
        variants.push_back(variant_from_string(std::string(1, c)));
    }

    AblationTable table = ablate_integration(cfg, tasks, variants, seeds, dir, demos, trials);
    std::ofstream(dir + "/ablation.csv") << table.to_csv();
    std::ofstream(dir + "/ablation.txt") << table.to_text();
    std::cout << table.to_text();
    std::cout << "table: " << dir << "/ablation.csv\n";
    return 0;
}

int cmd_bench(const GlobalOpts& g, const std::string& ckpt_path, int iters, int warmup, const std::string& task_name) {
    std::unique_ptr<VlaModel> model;
    RunConfig cfg;
    if (!ckpt_path.empty()) {
        model = model_from_checkpoint(load_checkpoint_file(ckpt_path));
        cfg = model->config();
    } else {
        cfg = resolve_config(g, "bench-seed");
        model = std::make_unique<VlaModel>(cfg, cfg.seed);
        model->set_norm(identity_norm(cfg));
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    cfg.run_id = g.run_id.empty() ? "bench-seed" + std::to_string(cfg.seed) : g.run_id;
    std::string dir = prepare_run_dir(cfg);

    BenchReport report = benchmark_inference(*model, warmup, iters, task_from_string(task_name), cfg.seed);
    std::ofstream(dir + "/bench.json") << bench_to_json(report).dump(2) << "\n";
    std::cout << bench_to_json(report).dump(2) << "\n";
    std::cout << "report: " << dir << "/bench.json\n";
    return 0;
}

int cmd_inspect_attn(const GlobalOpts& g, const std::string& ckpt_path, const std::string& ref_path, int probes,
                     int query, const std::string& task_name) {
    auto model = model_from_checkpoint(load_checkpoint_file(ckpt_path));
    RunConfig cfg = model->config();
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    cfg.run_id = g.run_id.empty() ? "inspect-attn-seed" + std::to_string(cfg.seed) : g.run_id;
    std::string dir = prepare_run_dir(cfg);
    fs::create_directories(dir + "/attn");

    Task task = task_from_string(task_name);
    std::uint64_t seed = g.seed_set ? g.seed : cfg.seed;
    int k = cfg.backbone.extract_layer;

    NoGradGuard ng;
    for (int i = 0; i < probes; ++i) {
        ToyEnv env(task, seed + 1000 + static_cast<std::uint64_t>(i), cfg.env);
        ObservationSet obs = env.observe();
        std::vector<ObservationSet> obs_v{obs};
        std::vector<Instruction> instr_v{env.instruction()};
        BackboneOut out = model->backbone().forward(obs_v, instr_v, model->store(), true);
        const AttentionMap& map = out.maps[static_cast<std::size_t>(k - 1)];
        for (int v = 0; v < cfg.backbone.views; ++v) {
            std::string path = dir + "/attn/probe" + std::to_string(i) + "_layer" + std::to_string(k) + "_view" +
                               std::to_string(v) + ".pgm";
            dump_attention_pgm(map, query, v, obs, path);
        }
    }
    std::cout << "attention maps: " << dir << "/attn\n";

    if (!ref_path.empty()) {
        auto ref = model_from_checkpoint(load_checkpoint_file(ref_path));
        DriftReport drift = attention_drift(*ref, *model, task, probes, seed + 1000);
        json j{{"layer_k", drift.layer_k}, {"per_layer", drift.per_layer}};
        std::ofstream(dir + "/drift.json") << j.dump(2) << "\n";
        std::cout << "attention drift (layer " << k << "): " << drift.layer_k << "\n";
        std::cout << "per-layer: " << json(drift.per_layer).dump() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale vision-language-action policy: toy environments, flow-matching action expert, "
                 "two-stage training"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file");
    auto* seed_opt = app.add_option("--seed", g.seed, "Master seed (overrides config)");
    app.add_option("--out", g.out_dir, "Output root directory (default runs/)");
    app.add_option("--run-id", g.run_id, "Run identifier (default derived from the command)");

    auto* gen = app.add_subcommand("gen-data", "Generate scripted-expert demonstrations");
    std::string gd_task = "reach";
    int gd_n = 50;
    std::string gd_out;
    gen->add_option("--task", gd_task, "reach | push | pickplace");
    gen->add_option("--n", gd_n, "Number of successful episodes")->check(CLI::PositiveNumber);
    gen->add_option("--out-file", gd_out, "Dataset path (.jsonl)");

    auto* train = app.add_subcommand("train", "Train a policy on a demo dataset");
    std::string tr_data, tr_stage = "1", tr_from, tr_ckpt_out;
    int tr_steps = 0;
    train->add_option("--data", tr_data, "Demo dataset (.jsonl)")->required();
    train->add_option("--stage", tr_stage, "1 | 2 | single");
    train->add_option("--from", tr_from, "Stage-1 checkpoint (required for stage 2)");
    train->add_option("--ckpt-out", tr_ckpt_out, "Checkpoint output path");
    train->add_option("--steps", tr_steps, "Override the stage's step budget");

    auto* eval = app.add_subcommand("eval", "Closed-loop evaluation of a checkpoint");
    std::string ev_ckpt, ev_task = "reach";
    int ev_trials = 10, ev_replan = 0;
    eval->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    eval->add_option("--task", ev_task, "reach | push | pickplace");
    eval->add_option("--trials", ev_trials, "Number of trials")->check(CLI::PositiveNumber);
    eval->add_option("--replan-every", ev_replan, "Execute k actions of each chunk before replanning");

    auto* ablate = app.add_subcommand("ablate", "Integration-variant ablation");
    std::vector<std::string> ab_tasks;
    std::string ab_variants = "ABCD";
    std::vector<std::uint64_t> ab_seeds;
    int ab_demos = 20, ab_trials = 10, ab_steps1 = 0, ab_steps2 = 0;
    ablate->add_option("--task", ab_tasks, "Tasks (repeatable; default pickplace)");
    ablate->add_option("--variants", ab_variants, "Subset of ABCD");
    ablate->add_option("--seeds", ab_seeds, "Training seeds (default 1 2 3)");
    ablate->add_option("--demos", ab_demos, "Demonstrations per task");
    ablate->add_option("--trials", ab_trials, "Evaluation trials per cell");
    ablate->add_option("--steps1", ab_steps1, "Stage-1 budget override");
    ablate->add_option("--steps2", ab_steps2, "Stage-2 budget override");

    auto* bench = app.add_subcommand("bench", "Inference frequency / memory report");
    std::string be_ckpt, be_task = "reach";
    int be_iters = 100, be_warmup = 5;
    bench->add_option("--ckpt", be_ckpt, "Checkpoint (default: freshly initialized model)");
    bench->add_option("--iters", be_iters, "Timed iterations");
    bench->add_option("--warmup", be_warmup, "Warmup iterations (excluded)");
    bench->add_option("--task", be_task, "Probe task");

    auto* inspect = app.add_subcommand("inspect-attn", "Export attention maps; drift vs a reference");
    std::string ia_ckpt, ia_ref, ia_task = "reach";
    int ia_probes = 4, ia_query = 2;
    inspect->add_option("--ckpt", ia_ckpt, "Checkpoint path")->required();
    inspect->add_option("--ckpt-ref", ia_ref, "Reference checkpoint for the drift score");
    inspect->add_option("--probes", ia_probes, "Probe episodes");
    inspect->add_option("--query", ia_query, "Query token index (default: goal color token)");
    inspect->add_option("--task", ia_task, "Probe task");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
        g.seed_set = seed_opt->count() > 0;
        if (gen->parsed()) return cmd_gen_data(g, gd_task, gd_n, gd_out);
        if (train->parsed()) return cmd_train(g, tr_data, tr_stage, tr_from, tr_ckpt_out, tr_steps);
        if (eval->parsed()) return cmd_eval(g, ev_ckpt, ev_task, ev_trials, ev_replan);
        if (ablate->parsed())
            return cmd_ablate(g, ab_tasks, ab_variants, ab_seeds, ab_demos, ab_trials, ab_steps1, ab_steps2);
        if (bench->parsed()) return cmd_bench(g, be_ckpt, be_iters, be_warmup, be_task);
        if (inspect->parsed()) return cmd_inspect_attn(g, ia_ckpt, ia_ref, ia_probes, ia_query, ia_task);
        return 1;
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") return app.exit(e);
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const checkpoint_error& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 1;
    } catch (const TrainAbort& e) {
        std::cerr << "abort: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "abort: " << e.what() << "\n";
        return 2;
    }
}
