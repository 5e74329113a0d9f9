#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "grkan/denoiser.hpp"
#include "grkan/layers.hpp"
#include "grkan/signal.hpp"
#include "grkan/train.hpp"

namespace grkan::bench {

using json = nlohmann::json;

// The six signal-fitting model families. Architecture is fully determined by
// the method name: MLP families are linear(1,h) -> act -> linear(h,h) -> act
// -> linear(h,1) with h=12 (relu, gelu, pau) and h=8 (apl, grkan; grkan's
// act->linear pairs are GR-KAN layers); kan stacks KAN layers (1,4), (4,1).
enum class Method { relu, gelu, pau, apl, grkan, kan };

const std::vector<Method>& all_methods();
std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::string method_architecture(Method m);  // human-readable layer listing

struct BuiltModel {
    std::vector<ad::Var> params;
    std::vector<std::pair<std::string, size_t>> items;  // itemized param counts
    std::function<ad::Var(const ad::Var&)> forward;     // L x 1 -> L x 1
    std::function<ad::Var()> penalty;  // extra loss term (APL); null otherwise

    size_t param_count() const {
        size_t n = 0;
        for (const auto& [name, c] : items) n += c;
        return n;
    }
};

BuiltModel build_method_model(Method m, uint64_t seed);

struct Table1Options {
    std::vector<uint64_t> seeds = {0, 1, 2};
    int steps = 300000;
    bool early_stop = false;  // window 10000, 1% relative tolerance
    std::string out_dir = "out";
    int threads = 0;  // 0 = hardware concurrency (capped by task count)
    SignalConfig signal;
};

struct Table1Run {
    Method method = Method::relu;
    uint64_t seed = 0;
    double mse = 0.0;  // clean forward pass after training (no penalty term)
    size_t params = 0;
    RunTrace trace;
};

struct Table1Result {
    std::vector<Table1Run> runs;
    std::vector<std::pair<Method, double>> medians;
    bool orderings_ok = false;  // grkan<relu, kan<relu, grkan<=gelu+0.01
    json report;

    double median_of(Method m) const;
};

// Trains every method on every seed, writes <out>/table1_report.json,
// <out>/table1_summary.csv and per-method fit curves for the first seed.
Table1Result run_table1(const Table1Options& opts);

struct DenoiseOptions {
    std::vector<int> depths = {2};
    double snr_db = 5.0;
    std::vector<uint64_t> seeds = {0, 1, 2};
    int steps = 6000;
    int pair_count = 100;
    int batch_size = 4;    // pairs per step (0 = full batch)
    double lr = 3e-4;
    uint64_t data_seed = 42;
    std::string out_dir = "out";
    int threads = 0;
};

struct DenoiseVariantSummary {
    int depth = 0;
    DnSite site = DnSite::both;
    DnKind kind = DnKind::relu;
    double median_heldout_l1 = 0.0;
    size_t params = 0;
};

struct DenoiseResult {
    std::vector<DenoiseRun> runs;
    std::vector<DenoiseVariantSummary> variants;
    bool direction_ok = false;  // grkan median <= relu median at every (depth, site)
    json report;
};

// Compares relu vs grkan activations at each requested depth and each
// activation site in {enc, dec, both}; writes <out>/denoise_report.json and
// <out>/denoise_summary.csv.
DenoiseResult run_denoise(const DenoiseOptions& opts);

// CSV rows "time_s,target,prediction" (headerless, one per sample).
void export_fit_curve(const std::string& path, const SignalDataset& ds,
                      const std::vector<double>& predictions);

// Removes wall-clock fields ("generated_at", "wall_time_s",
// "total_wall_time_s") everywhere so reports can be compared for determinism.
json strip_volatile(const json& j);

// Serialize with sorted keys and 2-space indent (the on-disk report format).
std::string report_to_string(const json& j);

// Write-temp-then-rename; throws std::runtime_error on failure.
void atomic_write(const std::string& path, const std::string& content);

// Compact re-run of the cross-module invariant suites; prints one line per
// suite and returns true when all pass.
bool selftest(std::ostream& out);

}  // namespace grkan::bench
