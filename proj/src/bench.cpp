#include "evoact/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "evoact/trainer.hpp"

namespace evoact {

using nlohmann::json;

namespace {

std::string hardware_descriptor() {
    std::string cpu = "unknown-cpu";
    std::ifstream info("/proc/cpuinfo");
    std::string line;
    while (std::getline(info, line)) {
        if (line.rfind("model name", 0) == 0) {
            auto pos = line.find(':');
            if (pos != std::string::npos) {
                cpu = line.substr(pos + 1);
                while (!cpu.empty() && cpu.front() == ' ') cpu.erase(cpu.begin());
            }
            break;
        }
    }
    return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " threads";
}

double rss_hwm_mb() {
    std::ifstream status("/proc/self/status");
    std::string line;
    while (std::getline(status, line)) {
        if (line.rfind("VmHWM:", 0) == 0) {
            std::istringstream is(line.substr(6));
            double kb = 0;
            is >> kb;
            return kb / 1024.0;
        }
    }
    return 0;
}

}  // namespace

json bench_to_json(const BenchReport& r) {
    return json{{"model_id", r.model_id},
                {"param_count", r.param_count},
                {"mean_ms", r.mean_ms},
                {"median_ms", r.median_ms},
                {"hz", r.hz},
                {"peak_mb", r.peak_mb},
                {"mem_method", r.mem_method},
                {"os_rss_mb", r.os_rss_mb},
                {"sampler_steps", r.sampler_steps},
                {"warmup", r.warmup},
                {"iters", r.iters},
                {"hardware", r.hardware},
                {"note", r.note}};
}

BenchReport benchmark_inference(VlaModel& model, int n_warmup, int n_iters, Task task, std::uint64_t seed) {
    if (n_iters < 10) throw config_error("benchmark_inference: need at least 10 iterations");
    if (n_warmup < 0) throw config_error("benchmark_inference: warmup must be >= 0");

    ToyEnv env(task, seed, model.config().env);
    ObservationSet obs = env.observe();
    Instruction instr = env.instruction();
    RobotState state = env.robot_state();
    Rng rng(seed ^ 0xBE9C);

    int steps = model.config().sampler_steps;
    for (int i = 0; i < n_warmup; ++i) model.predict_chunk(obs, instr, state, steps, rng);

    alloc_stats::reset_peak();
    std::vector<double> times;
    for (int i = 0; i < n_iters; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        model.predict_chunk(obs, instr, state, steps, rng);
        auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    BenchReport r;
    r.model_id = "evoact-" + to_string(model.config().dit.variant);
    r.param_count = model.store().total_params();
    double sum = 0;
    for (double t : times) sum += t;
    r.mean_ms = sum / n_iters;
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    r.median_ms = n_iters % 2 ? sorted[static_cast<std::size_t>(n_iters / 2)]
                              : 0.5 * (sorted[static_cast<std::size_t>(n_iters / 2 - 1)] +
                                       sorted[static_cast<std::size_t>(n_iters / 2)]);
    r.hz = 1000.0 / r.mean_ms;
    r.peak_mb = static_cast<double>(alloc_stats::peak_bytes()) / (1024.0 * 1024.0);
    r.mem_method = "tensor-allocator-peak";
    r.os_rss_mb = rss_hwm_mb();
    r.sampler_steps = steps;
    r.warmup = n_warmup;
    r.iters = n_iters;
    r.hardware = hardware_descriptor();
    return r;
}

std::string AblationTable::to_csv() const {
    std::ostringstream os;
    os << "variant,seed,task,success_rate,steps_trained,failed\n";
    for (const auto& c : rows) {
        os << to_string(c.variant) << "," << c.seed << "," << to_string(c.task) << "," << c.success << ","
           << c.steps_trained << "," << (c.failed ? 1 : 0) << "\n";
    }
    return os.str();
}

std::vector<std::tuple<Variant, double, double>> AblationTable::aggregates() const {
    std::vector<std::tuple<Variant, double, double>> out;
    for (Variant v : {Variant::A, Variant::B, Variant::C, Variant::D}) {
        std::vector<double> xs;
        for (const auto& c : rows) {
            if (c.variant == v && !c.failed) xs.push_back(c.success);
        }
        if (xs.empty()) continue;
        double mean = 0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(xs.size());
        out.emplace_back(v, mean, std::sqrt(var));
    }
    return out;
}

std::string AblationTable::to_text() const {
    std::ostringstream os;
    os << "variant  seed        task        success  steps\n";
    for (const auto& c : rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-8s %-11llu %-11s %7.3f  %lld%s\n", to_string(c.variant).c_str(),
                      static_cast<unsigned long long>(c.seed), to_string(c.task).c_str(), c.success,
                      static_cast<long long>(c.steps_trained), c.failed ? "  [FAILED]" : "");
        os << buf;
    }
    os << "\naggregate success (mean +/- stddev over seeds x tasks)\n";
    for (const auto& [v, mean, sd] : aggregates()) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "  %s: %.3f +/- %.3f\n", to_string(v).c_str(), mean, sd);
        os << buf;
    }
    return os.str();
}

AblationTable ablate_integration(const RunConfig& base, const std::vector<Task>& tasks,
                                 const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
                                 const std::string& work_dir, int demos, int trials) {
    if (seeds.empty()) throw config_error("ablate: need at least one seed");
    AblationTable table;
    for (Task task : tasks) {
        // Identical demonstrations for every cell of this task.
        std::string data_path = work_dir + "/ablate_" + to_string(task) + ".jsonl";
        generate_demos(task, demos, base.seed, data_path, base.dit.horizon, base.env);
        DemoDataset data = load_demos(data_path);
        for (Variant v : variants) {
            for (std::uint64_t seed : seeds) {
                RunConfig cfg = base;
                cfg.dit.variant = v;
                cfg.seed = seed;
                cfg.run_id = "ablate-" + to_string(task) + "-" + to_string(v) + "-" + std::to_string(seed);
                AblationCell cell;
                cell.variant = v;
                cell.seed = seed;
                cell.task = task;
                try {
                    VlaModel model(cfg, seed);
                    Trainer trainer(model, data, work_dir + "/" + cfg.run_id);
                    trainer.run_stage(1, cfg.train.stage1_steps);
                    trainer.run_stage(2, cfg.train.stage2_steps);
                    cell.steps_trained = trainer.global_step();
                    Rng eval_rng(seed ^ 0xE7A1);
                    EvalResult res = evaluate_policy(task, trials, seed + 9000,
                                                     model_policy(model, cfg.sampler_steps, eval_rng),
                                                     cfg.dit.horizon, cfg.replan_every, cfg.env);
                    cell.success = res.success_rate;
                } catch (const TrainAbort& e) {
                    cell.failed = true;
                    cell.steps_trained = e.step;
                }
                table.rows.push_back(cell);
            }
        }
    }
    return table;
}

void dump_attention_pgm(const AttentionMap& map, int query_token, int view, const ObservationSet& obs,
                        const std::string& path) {
    if (query_token < 0 || query_token >= map.tq) {
        throw config_error("dump_attention_pgm: query token " + std::to_string(query_token) + " outside [0," +
                           std::to_string(map.tq) + ")");
    }
    // Collect this view's image-token columns: image tokens appear in role
    // order, view 0 first.
    std::vector<int> image_cols;
    for (int c = 0; c < map.tkv; ++c) {
        if (map.roles[static_cast<std::size_t>(c)] == 1) image_cols.push_back(c);
    }
    if (image_cols.empty()) throw config_error("dump_attention_pgm: query token has no image keys");
    int n_views = static_cast<int>(obs.views.size());
    int per_view = static_cast<int>(image_cols.size()) / n_views;
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(per_view))));
    if (side * side != per_view) throw config_error("dump_attention_pgm: image tokens do not form a square grid");
    if (view < 0 || view >= n_views) throw config_error("dump_attention_pgm: view index out of range");

    std::vector<float> grid(static_cast<std::size_t>(per_view));
    for (int i = 0; i < per_view; ++i) {
        int col = image_cols[static_cast<std::size_t>(view * per_view + i)];
        grid[static_cast<std::size_t>(i)] =
            map.weights[static_cast<std::size_t>(query_token) * map.tkv + col];
    }

    int n = obs.height;
    std::vector<float> up = bilinear_upsample(grid, side, side, n, n);
    // Scale so uniform attention (1/P each) lands at mid-gray.
    float scale = 255.0f * static_cast<float>(per_view) / 2.0f;
    std::vector<std::uint8_t> pixels(up.size());
    for (std::size_t i = 0; i < up.size(); ++i) {
        pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(up[i] * scale), 0L, 255L));
    }
    write_pgm(path, n, n, pixels);

    // Side-by-side composite: rendered view luminance | attention.
    std::vector<std::uint8_t> comp(static_cast<std::size_t>(n) * 2 * n);
    const float* r = obs.plane(view, 0);
    const float* g = obs.plane(view, 1);
    const float* b = obs.plane(view, 2);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * n + x;
            float lum = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
            comp[static_cast<std::size_t>(y) * 2 * n + x] =
                static_cast<std::uint8_t>(std::clamp(std::lround(lum * 255.0f), 0L, 255L));
            comp[static_cast<std::size_t>(y) * 2 * n + n + x] = pixels[i];
        }
    }
    std::string comp_path = path;
    auto pos = comp_path.rfind(".pgm");
    if (pos != std::string::npos && pos == comp_path.size() - 4) comp_path.resize(pos);
    comp_path += "_composite.pgm";
    write_pgm(comp_path, 2 * n, n, comp);
}

}  // namespace evoact
