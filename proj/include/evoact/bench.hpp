#pragma once

#include <json.hpp>

#include "evoact/dataset.hpp"
#include "evoact/model.hpp"
#include "evoact/pgm.hpp"

namespace evoact {

struct BenchReport {
    std::string model_id;
    std::int64_t param_count = 0;
    double mean_ms = 0;
    double median_ms = 0;
    double hz = 0;  // 1000 / mean_ms, one full H-chunk prediction
    double peak_mb = 0;
    std::string mem_method;
    double os_rss_mb = 0;
    int sampler_steps = 0;
    int warmup = 0;
    int iters = 0;
    std::string hardware;
    std::string note = "policy-only timing; environment stepping excluded";
};

nlohmann::json bench_to_json(const BenchReport& r);

// Times full observation -> chunk prediction; warmup iterations excluded.
BenchReport benchmark_inference(VlaModel& model, int n_warmup, int n_iters, Task task, std::uint64_t seed);

struct AblationCell {
    Variant variant = Variant::A;
    std::uint64_t seed = 0;
    Task task = Task::Reach;
    double success = 0;
    std::int64_t steps_trained = 0;
    bool failed = false;  // training aborted (non-finite loss)
};

struct AblationTable {
    std::vector<AblationCell> rows;
    std::string to_csv() const;
    std::string to_text() const;
    // mean and stddev of success per variant
    std::vector<std::tuple<Variant, double, double>> aggregates() const;
};

// Trains every (task, variant, seed) cell under identical data and budget,
// evaluates, and returns the table. A cell whose training aborts is marked
// failed and kept.
AblationTable ablate_integration(const RunConfig& base, const std::vector<Task>& tasks,
                                 const std::vector<Variant>& variants, const std::vector<std::uint64_t>& seeds,
                                 const std::string& work_dir, int demos, int trials);

// Attention over one view's image tokens -> patch grid -> bilinear upsample
// -> P5 PGM, plus a side-by-side composite with the rendered view at
// <path minus .pgm>_composite.pgm. Pixel scale: 255 * weight * P / 2, so
// uniform attention renders mid-gray.
void dump_attention_pgm(const AttentionMap& map, int query_token, int view, const ObservationSet& obs,
                        const std::string& path);

}  // namespace evoact
