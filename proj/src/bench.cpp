#include "grkan/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "grkan/rng.hpp"

namespace grkan::bench {

using ad::Tensor;
using ad::Var;

namespace {

constexpr int kSchemaVersion = 1;
constexpr const char* kArtifactVersion = "1.0.0";

// Design constants echoed into every report.
constexpr int kRationalM = 5, kRationalN = 4;
constexpr double kFitLo = -3.0, kFitHi = 3.0;
constexpr int kFitSamples = 1000;
constexpr int kSecondMomentSamples = 200000;
constexpr double kAplLambda = 0.001;
constexpr int kAplHinges = 5;
constexpr double kAplSlopeStd = 0.1, kAplOffsetStd = 0.5;
constexpr int kTable1Groups = 4;
constexpr int kKanGridSize = 5, kKanOrder = 3;
constexpr double kKanDomainLo = -1.0, kKanDomainHi = 1.0;

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string iso_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

json trace_to_json(const RunTrace& t) {
    json j;
    json cps = json::array();
    for (const auto& c : t.checkpoints) cps.push_back({c.step, c.loss});
    j["checkpoints"] = std::move(cps);
    j["final_loss"] = t.final_loss;
    j["steps_run"] = t.steps_run;
    j["seed"] = t.seed;
    j["diverged"] = t.diverged;
    if (!t.abort_reason.empty()) j["abort_reason"] = t.abort_reason;
    j["wall_time_s"] = t.wall_time_s;
    return j;
}

json items_to_json(const std::vector<std::pair<std::string, size_t>>& items) {
    json j = json::object();
    for (const auto& [name, count] : items) j[name] = count;
    return j;
}

json rational_config() {
    return {{"degree_m", kRationalM},
            {"degree_n", kRationalN},
            {"safe_denominator", "1+|Q(x)|"},
            {"grkan_init_target", "swish"},
            {"pau_init_target", "leaky_relu"},
            {"fit_interval", {kFitLo, kFitHi}},
            {"fit_samples", kFitSamples},
            {"fit_refine_max_steps", 5000},
            {"fit_improve_tol", 1e-6},
            {"second_moment_samples", kSecondMomentSamples}};
}

json signal_config_json(const SignalConfig& s) {
    return {{"duration_s", s.duration},
            {"sample_rate_hz", s.sample_rate},
            {"syllable_dur_s", {s.syllable_min, s.syllable_max}},
            {"pause_dur_s", {s.pause_min, s.pause_max}},
            {"base_freq_hz", s.base_freq},
            {"freq_mod", {{"depth1", s.freq_mod_depth1},
                          {"rate1_hz", s.freq_mod_rate1},
                          {"depth2", s.freq_mod_depth2},
                          {"rate2_hz", s.freq_mod_rate2}}},
            {"formants_hz", s.formants},
            {"formant_mod_depth_hz", s.formant_mod_depth},
            {"formant_mod_rate_hz", s.formant_mod_rate},
            {"formant_rel_amp", s.formant_rel_amp},
            {"envelope_scale", {s.envelope_lo, s.envelope_hi}},
            {"envelope_decay", s.envelope_decay},
            {"noise_std", s.noise_std},
            {"seed", s.seed}};
}

json train_config_json(int steps, double lr, bool early_stop) {
    json j = {{"steps", steps},
              {"lr", lr},
              {"optimizer", "adam"},
              {"beta1", 0.9},
              {"beta2", 0.999},
              {"eps", 1e-8},
              {"batch", "full"},
              {"checkpoint_cadence", "steps/100"},
              {"loss", "mse"}};
    if (early_stop)
        j["early_stop"] = {{"window", 10000}, {"rel_tol", 0.01}};
    else
        j["early_stop"] = nullptr;
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    atomic_write(path, content);
}

int auto_threads(int requested, size_t tasks) {
    int n = requested > 0 ? requested
                          : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    return static_cast<int>(std::min<size_t>(n, tasks));
}

template <class Fn>
void run_parallel(size_t task_count, int threads, Fn&& body) {
    if (threads <= 1) {
        for (size_t i = 0; i < task_count; ++i) body(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mu;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&]() {
            for (size_t i = next.fetch_add(1); i < task_count; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

const std::vector<Method>& all_methods() {
    static const std::vector<Method> ms = {Method::relu, Method::gelu, Method::pau,
                                           Method::apl,  Method::grkan, Method::kan};
    return ms;
}

std::string method_name(Method m) {
    switch (m) {
        case Method::relu: return "relu";
        case Method::gelu: return "gelu";
        case Method::pau: return "pau";
        case Method::apl: return "apl";
        case Method::grkan: return "grkan";
        case Method::kan: return "kan";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    for (Method m : all_methods())
        if (method_name(m) == name) return m;
    throw std::invalid_argument("unknown method: " + name);
}

std::string method_architecture(Method m) {
    switch (m) {
        case Method::relu: return "linear(1,12) -> relu -> linear(12,12) -> relu -> linear(12,1)";
        case Method::gelu: return "linear(1,12) -> gelu -> linear(12,12) -> gelu -> linear(12,1)";
        case Method::pau: return "linear(1,12) -> pau -> linear(12,12) -> pau -> linear(12,1)";
        case Method::apl: return "linear(1,8) -> apl -> linear(8,8) -> apl -> linear(8,1)";
        case Method::grkan:
            return "linear(1,8) -> grkan(8,8, k=4) -> grkan(8,1, k=4)";
        case Method::kan: return "kan(1,4, G=5, order=3) -> kan(4,1, G=5, order=3)";
    }
    return "?";
}

BuiltModel build_method_model(Method m, uint64_t seed) {
    Rng rng(seed);
    BuiltModel model;
    switch (m) {
        case Method::relu:
        case Method::gelu: {
            const size_t h = 12;
            const Act act = m == Method::relu ? Act::relu : Act::gelu;
            Linear l1 = Linear::init(1, h, rng);
            Linear l2 = Linear::init(h, h, rng);
            Linear l3 = Linear::init(h, 1, rng);
            model.params = {l1.W, l1.b, l2.W, l2.b, l3.W, l3.b};
            model.items = {{"linear1", l1.param_count()},
                           {"linear2", l2.param_count()},
                           {"linear3", l3.param_count()}};
            model.forward = [l1, l2, l3, act](const Var& x) {
                return l3.forward(
                    fixed_act(act, l2.forward(fixed_act(act, l1.forward(x)))));
            };
            break;
        }
        case Method::pau: {
            const size_t h = 12;
            Linear l1 = Linear::init(1, h, rng);
            Linear l2 = Linear::init(h, h, rng);
            Linear l3 = Linear::init(h, 1, rng);
            const RationalFit& fit =
                rational_fit_cached(Act::leaky_relu, kFitLo, kFitHi, kFitSamples);
            Var n1(Tensor::vec(fit.coeffs.num), true), d1(Tensor::vec(fit.coeffs.den), true);
            Var n2(Tensor::vec(fit.coeffs.num), true), d2(Tensor::vec(fit.coeffs.den), true);
            model.params = {l1.W, l1.b, n1, d1, l2.W, l2.b, n2, d2, l3.W, l3.b};
            model.items = {{"linear1", l1.param_count()},
                           {"act1.pau", n1.size() + d1.size()},
                           {"linear2", l2.param_count()},
                           {"act2.pau", n2.size() + d2.size()},
                           {"linear3", l3.param_count()}};
            model.forward = [l1, l2, l3, n1, d1, n2, d2](const Var& x) {
                return l3.forward(
                    rational(l2.forward(rational(l1.forward(x), n1, d1)), n2, d2));
            };
            break;
        }
        case Method::apl: {
            const size_t h = 8;
            Linear l1 = Linear::init(1, h, rng);
            Linear l2 = Linear::init(h, h, rng);
            Linear l3 = Linear::init(h, 1, rng);
            auto make_site = [&rng, h]() {
                Tensor a = Tensor::zeros(kAplHinges, h);
                for (size_t i = 0; i < a.size(); ++i) a[i] = rng.normal(0.0, kAplSlopeStd);
                Tensor b = Tensor::zeros(kAplHinges, h);
                for (size_t i = 0; i < b.size(); ++i) b[i] = rng.normal(0.0, kAplOffsetStd);
                return std::pair<Var, Var>{Var(std::move(a), true), Var(std::move(b), true)};
            };
            auto [s1, o1] = make_site();
            auto [s2, o2] = make_site();
            model.params = {l1.W, l1.b, s1, o1, l2.W, l2.b, s2, o2, l3.W, l3.b};
            model.items = {{"linear1", l1.param_count()},
                           {"act1.apl", s1.size() + o1.size()},
                           {"linear2", l2.param_count()},
                           {"act2.apl", s2.size() + o2.size()},
                           {"linear3", l3.param_count()}};
            model.forward = [l1, l2, l3, s1, o1, s2, o2](const Var& x) {
                return l3.forward(apl(l2.forward(apl(l1.forward(x), s1, o1)), s2, o2));
            };
            model.penalty = [s1, o1, s2, o2]() {
                return apl_l2_penalty(s1, o1, kAplLambda) +
                       apl_l2_penalty(s2, o2, kAplLambda);
            };
            break;
        }
        case Method::grkan: {
            const size_t h = 8;
            Linear l1 = Linear::init(1, h, rng);
            GrKanLayer g1 =
                GrKanLayer::init_variance_preserving(h, h, kTable1Groups, Act::swish, rng);
            GrKanLayer g2 =
                GrKanLayer::init_variance_preserving(h, 1, kTable1Groups, Act::swish, rng);
            model.params = {l1.W, l1.b};
            for (const Var& p : g1.params()) model.params.push_back(p);
            for (const Var& p : g2.params()) model.params.push_back(p);
            const size_t rat1 = 10 * g1.groups, rat2 = 10 * g2.groups;
            model.items = {{"linear1", l1.param_count()},
                           {"grkan1.rationals", rat1},
                           {"grkan1.linear", g1.lin.param_count()},
                           {"grkan2.rationals", rat2},
                           {"grkan2.linear", g2.lin.param_count()}};
            model.forward = [l1, g1, g2](const Var& x) {
                return g2.forward(g1.forward(l1.forward(x)));
            };
            break;
        }
        case Method::kan: {
            const KnotGrid grid =
                make_knot_grid(kKanDomainLo, kKanDomainHi, kKanGridSize, kKanOrder);
            KanLayer k1 = KanLayer::init(1, 4, grid, rng);
            KanLayer k2 = KanLayer::init(4, 1, grid, rng);
            model.params = {k1.base_w, k1.spline_scale, k1.coeffs,
                            k2.base_w, k2.spline_scale, k2.coeffs};
            model.items = {{"kan1.base_w", k1.base_w.size()},
                           {"kan1.spline_scale", k1.spline_scale.size()},
                           {"kan1.coeffs", k1.coeffs.size()},
                           {"kan2.base_w", k2.base_w.size()},
                           {"kan2.spline_scale", k2.spline_scale.size()},
                           {"kan2.coeffs", k2.coeffs.size()}};
            model.forward = [k1, k2](const Var& x) { return k2.forward(k1.forward(x)); };
            break;
        }
    }
    return model;
}

double Table1Result::median_of(Method m) const {
    for (const auto& [method, med] : medians)
        if (method == m) return med;
    throw std::invalid_argument("no median for method " + method_name(m));
}

Table1Result run_table1(const Table1Options& opts) {
    if (opts.seeds.empty()) throw std::invalid_argument("run_table1: no seeds");
    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(opts.out_dir);

    const Signal sig = generate_signal(opts.signal);
    const SignalDataset ds = to_dataset(sig, 0.0, opts.signal.duration);
    const size_t n = ds.inputs.size();
    const Tensor Xt = Tensor::matrix(n, 1, ds.inputs);
    const Tensor Yt = Tensor::matrix(n, 1, ds.targets);

    struct Task {
        Method m;
        uint64_t seed;
        size_t method_idx, seed_idx;
    };
    std::vector<Task> tasks;
    for (size_t mi = 0; mi < all_methods().size(); ++mi)
        for (size_t si = 0; si < opts.seeds.size(); ++si)
            tasks.push_back({all_methods()[mi], opts.seeds[si], mi, si});

    Table1Result result;
    result.runs.resize(tasks.size());
    std::vector<json> run_items(tasks.size());
    std::vector<std::vector<double>> first_seed_preds(all_methods().size());

    run_parallel(tasks.size(), auto_threads(opts.threads, tasks.size()), [&](size_t i) {
        const Task& task = tasks[i];
        BuiltModel model = build_method_model(task.m, task.seed);
        Var X(Xt, false), Y(Yt, false);
        TrainConfig cfg;
        cfg.steps = opts.steps;
        cfg.seed = task.seed;
        if (opts.early_stop) cfg.early_stop = EarlyStop{10000, 0.01};
        auto loss_fn = [&]() {
            Var loss = mse_loss(model.forward(X), Y);
            if (model.penalty) loss = loss + model.penalty();
            return loss;
        };
        RunTrace trace = train_run(loss_fn, model.params, cfg);
        double mse;
        std::vector<double> preds(n);
        {
            ad::NoGradGuard no_grad;
            Var out = model.forward(X);
            mse = mse_loss(out, Y).value().item();
            for (size_t r = 0; r < n; ++r) preds[r] = out.value().at(r, 0);
        }
        result.runs[i] = {task.m, task.seed, mse, model.param_count(), std::move(trace)};
        run_items[i] = items_to_json(model.items);
        if (task.seed_idx == 0) first_seed_preds[task.method_idx] = std::move(preds);
    });

    for (size_t mi = 0; mi < all_methods().size(); ++mi) {
        std::vector<double> mses;
        for (size_t si = 0; si < opts.seeds.size(); ++si)
            mses.push_back(result.runs[mi * opts.seeds.size() + si].mse);
        result.medians.emplace_back(all_methods()[mi], median(std::move(mses)));
    }
    const double med_relu = result.median_of(Method::relu);
    const double med_gelu = result.median_of(Method::gelu);
    const double med_grkan = result.median_of(Method::grkan);
    const double med_kan = result.median_of(Method::kan);
    result.orderings_ok = med_grkan < med_relu && med_kan < med_relu &&
                          med_grkan <= med_gelu + 0.01;

    // Report assembly (single-threaded, stable ordering).
    json report;
    report["schema_version"] = kSchemaVersion;
    report["artifact_version"] = kArtifactVersion;
    report["kind"] = "table1";
    report["generated_at"] = iso_now();
    json config;
    config["rational"] = rational_config();
    config["apl"] = {{"hinges", kAplHinges},
                     {"lambda", kAplLambda},
                     {"slope_init_std", kAplSlopeStd},
                     {"offset_init_std", kAplOffsetStd}};
    config["kan"] = {{"grid_size", kKanGridSize},
                     {"order", kKanOrder},
                     {"domain", {kKanDomainLo, kKanDomainHi}},
                     {"coeff_init_std", 0.1 / (kKanGridSize + kKanOrder)},
                     {"base_init_bound", "sqrt(6/I)"},
                     {"spline_scale_init", 1.0}};
    config["grkan"] = {{"table1_groups", kTable1Groups},
                       {"denoiser_groups", "min(4, channels)"}};
    config["signal"] = signal_config_json(opts.signal);
    config["normalization"] = {{"raw_interval", {0.0, opts.signal.duration}},
                               {"mapped_interval", {-1.0, 1.0}}};
    config["train"] = train_config_json(opts.steps, 1e-3, opts.early_stop);
    json archs = json::object();
    for (Method m : all_methods()) archs[method_name(m)] = method_architecture(m);
    config["methods"] = archs;
    config["seeds"] = opts.seeds;
    report["config"] = std::move(config);

    json runs = json::array();
    for (size_t i = 0; i < result.runs.size(); ++i) {
        const Table1Run& r = result.runs[i];
        runs.push_back({{"method", method_name(r.method)},
                        {"seed", r.seed},
                        {"mse", r.mse},
                        {"params", r.params},
                        {"param_items", run_items[i]},
                        {"trace", trace_to_json(r.trace)}});
    }
    report["runs"] = std::move(runs);

    json medians = json::object();
    for (const auto& [m, med] : result.medians) medians[method_name(m)] = med;
    report["aggregates"] = {
        {"medians", std::move(medians)},
        {"orderings",
         {{"grkan_lt_relu", med_grkan < med_relu},
          {"kan_lt_relu", med_kan < med_relu},
          {"grkan_le_gelu_plus_0.01", med_grkan <= med_gelu + 0.01}}},
        {"orderings_ok", result.orderings_ok},
        {"absolute", {{"grkan_median", med_grkan}, {"relu_minus_grkan", med_relu - med_grkan}}}};
    report["total_wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.report = report;

    write_text_file(opts.out_dir + "/table1_report.json", report_to_string(report));
    std::ostringstream csv;
    csv.precision(17);
    csv << "method,seed,mse,params\n";
    for (const Table1Run& r : result.runs)
        csv << method_name(r.method) << "," << r.seed << "," << r.mse << "," << r.params
            << "\n";
    write_text_file(opts.out_dir + "/table1_summary.csv", csv.str());
    for (size_t mi = 0; mi < all_methods().size(); ++mi)
        export_fit_curve(opts.out_dir + "/fit_" + method_name(all_methods()[mi]) + ".csv",
                         ds, first_seed_preds[mi]);
    return result;
}

DenoiseResult run_denoise(const DenoiseOptions& opts) {
    if (opts.seeds.empty()) throw std::invalid_argument("run_denoise: no seeds");
    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(opts.out_dir);
    const DenoiseData data = make_noisy_pairs(opts.pair_count, opts.snr_db, opts.data_seed);

    const std::vector<DnSite> sites = {DnSite::enc, DnSite::dec, DnSite::both};
    const std::vector<DnKind> kinds = {DnKind::relu, DnKind::grkan};
    struct VariantKey {
        int depth;
        DnSite site;
        DnKind kind;
    };
    std::vector<VariantKey> variants;
    for (int depth : opts.depths)
        for (DnSite site : sites)
            for (DnKind kind : kinds) variants.push_back({depth, site, kind});

    struct Task {
        size_t variant_idx, seed_idx;
    };
    std::vector<Task> tasks;
    for (size_t vi = 0; vi < variants.size(); ++vi)
        for (size_t si = 0; si < opts.seeds.size(); ++si) tasks.push_back({vi, si});

    DenoiseResult result;
    result.runs.resize(tasks.size());
    run_parallel(tasks.size(), auto_threads(opts.threads, tasks.size()), [&](size_t i) {
        const auto& [vi, si] = tasks[i];
        const VariantKey& v = variants[vi];
        DenoiserSpec spec;
        spec.depth = v.depth;
        spec.site = v.site;
        spec.kind = v.kind;
        TrainConfig cfg;
        cfg.steps = opts.steps;
        cfg.lr = opts.lr;
        cfg.seed = opts.seeds[si];
        result.runs[i] = train_denoiser(spec, data, cfg,
                                        opts.batch_size > 0 ? opts.batch_size : 0);
    });

    bool all_direction_ok = true;
    for (int depth : opts.depths)
        for (DnSite site : sites) {
            double med_by_kind[2] = {0.0, 0.0};
            for (size_t ki = 0; ki < kinds.size(); ++ki) {
                std::vector<double> vals;
                for (size_t i = 0; i < tasks.size(); ++i) {
                    const DenoiseRun& r = result.runs[i];
                    if (r.spec.depth == depth && r.spec.site == site &&
                        r.spec.kind == kinds[ki])
                        vals.push_back(r.heldout_l1);
                }
                med_by_kind[ki] = median(std::move(vals));
                DenoiseVariantSummary s;
                s.depth = depth;
                s.site = site;
                s.kind = kinds[ki];
                s.median_heldout_l1 = med_by_kind[ki];
                for (const DenoiseRun& r : result.runs)
                    if (r.spec.depth == depth && r.spec.site == site &&
                        r.spec.kind == kinds[ki])
                        s.params = r.params;
                result.variants.push_back(s);
            }
            if (!(med_by_kind[1] <= med_by_kind[0])) all_direction_ok = false;
        }
    result.direction_ok = all_direction_ok;

    json report;
    report["schema_version"] = kSchemaVersion;
    report["artifact_version"] = kArtifactVersion;
    report["kind"] = "denoise";
    report["generated_at"] = iso_now();
    json config;
    config["rational"] = rational_config();
    config["denoiser"] = {{"depths", opts.depths},
                          {"hidden", 16},
                          {"kernel", 8},
                          {"stride", 4},
                          {"groups", "min(4, channels)"},
                          {"padding", "symmetric zero, stride-aligned, inverted on decode"},
                          {"last_decoder_activation", "none"},
                          {"activation_init_target", "swish"}};
    config["data"] = {{"pair_count", opts.pair_count},
                      {"snr_db", opts.snr_db},
                      {"data_seed", opts.data_seed},
                      {"split", "80/20 disjoint seeds"},
                      {"noise", "white gaussian scaled to measured SNR"}};
    config["train"] = train_config_json(opts.steps, opts.lr, false);
    config["train"]["loss"] = "l1";
    if (opts.batch_size > 0)
        config["train"]["batch"] = opts.batch_size;
    config["seeds"] = opts.seeds;
    report["config"] = std::move(config);

    json runs = json::array();
    for (const DenoiseRun& r : result.runs)
        runs.push_back({{"depth", r.spec.depth},
                        {"site", site_name(r.spec.site)},
                        {"kind", r.spec.kind == DnKind::relu ? "relu" : "grkan"},
                        {"seed", r.seed},
                        {"params", r.params},
                        {"train_l1", r.train_l1},
                        {"heldout_l1", r.heldout_l1},
                        {"trace", trace_to_json(r.trace)}});
    report["runs"] = std::move(runs);
    json vars = json::array();
    for (const auto& v : result.variants)
        vars.push_back({{"depth", v.depth},
                        {"site", site_name(v.site)},
                        {"kind", v.kind == DnKind::relu ? "relu" : "grkan"},
                        {"median_heldout_l1", v.median_heldout_l1},
                        {"params", v.params}});
    report["aggregates"] = {{"variants", std::move(vars)},
                            {"direction_ok", result.direction_ok}};
    report["total_wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.report = report;

    write_text_file(opts.out_dir + "/denoise_report.json", report_to_string(report));
    std::ostringstream csv;
    csv.precision(17);
    csv << "depth,site,kind,seed,heldout_l1,train_l1,params\n";
    for (const DenoiseRun& r : result.runs)
        csv << r.spec.depth << "," << site_name(r.spec.site) << ","
            << (r.spec.kind == DnKind::relu ? "relu" : "grkan") << "," << r.seed << ","
            << r.heldout_l1 << "," << r.train_l1 << "," << r.params << "\n";
    write_text_file(opts.out_dir + "/denoise_summary.csv", csv.str());
    return result;
}

void export_fit_curve(const std::string& path, const SignalDataset& ds,
                      const std::vector<double>& predictions) {
    if (predictions.size() != ds.targets.size())
        throw std::invalid_argument("export_fit_curve: " + std::to_string(predictions.size()) +
                                    " predictions for " + std::to_string(ds.targets.size()) +
                                    " samples");
    std::ostringstream out;
    out.precision(17);
    for (size_t i = 0; i < predictions.size(); ++i)
        out << ds.raw_time[i] << "," << ds.targets[i] << "," << predictions[i] << "\n";
    atomic_write(path, out.str());
}

json strip_volatile(const json& j) {
    if (j.is_object()) {
        json out = json::object();
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "generated_at" || it.key() == "wall_time_s" ||
                it.key() == "total_wall_time_s")
                continue;
            out[it.key()] = strip_volatile(it.value());
        }
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& v : j) out.push_back(strip_volatile(v));
        return out;
    }
    return j;
}

std::string report_to_string(const json& j) { return j.dump(2) + "\n"; }

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

bool selftest(std::ostream& out) {
    bool all_ok = true;
    auto check = [&](const std::string& name, bool ok) {
        out << (ok ? "ok   " : "FAIL ") << name << "\n";
        all_ok = all_ok && ok;
    };

    // Partition of unity on the default KAN grid.
    {
        const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double x = -1.0 + 2.0 * i / 999.0;
            double s = 0.0;
            for (double b : bspline_basis(grid, x)) s += b;
            worst = std::max(worst, std::abs(s - 1.0));
        }
        check("spline partition of unity (1000 pts, <1e-9)", worst < 1e-9);
    }

    // KAN layer vs per-edge brute force.
    {
        const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
        Rng rng(7);
        KanLayer layer = KanLayer::init(2, 2, grid, rng);
        Tensor x = Tensor::zeros(5, 2);
        for (size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
        ad::NoGradGuard no_grad;
        const Tensor y = layer.forward(Var(x, false)).value();
        double worst = 0.0;
        for (size_t r = 0; r < 5; ++r)
            for (size_t j = 0; j < 2; ++j) {
                double ref = 0.0;
                for (size_t i = 0; i < 2; ++i) ref += kan_edge_eval(layer, i, j, x.at(r, i));
                worst = std::max(worst, std::abs(ref - y.at(r, j)));
            }
        check("kan layer vs brute-force edges (<1e-10)", worst < 1e-10);
    }

    // GR-KAN layer vs the grouped double sum.
    {
        Rng rng(11);
        GrKanLayer layer = GrKanLayer::init_variance_preserving(8, 3, 4, Act::swish, rng);
        Tensor x = Tensor::zeros(4, 8);
        for (size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        ad::NoGradGuard no_grad;
        const Tensor y = layer.forward(Var(x, false)).value();
        double worst = 0.0;
        for (size_t r = 0; r < 4; ++r)
            for (size_t j = 0; j < 3; ++j) {
                double ref = layer.lin.b.value()[j];
                for (size_t i = 0; i < 8; ++i) {
                    const size_t g = i / layer.group_width();
                    RationalCoeffs c{layer.nums[g].value().data(),
                                     layer.dens[g].value().data()};
                    ref += layer.lin.W.value().at(i, j) * rational_eval(c, x.at(r, i));
                }
                worst = std::max(worst, std::abs(ref - y.at(r, j)));
            }
        check("grkan layer vs double-sum (<1e-12)", worst < 1e-12);
    }

    // Finite differences through a KAN + GR-KAN + conv composition.
    {
        Rng rng(3);
        Tensor x0 = Tensor::zeros(6);
        for (size_t i = 0; i < 6; ++i) x0[i] = rng.uniform(-0.9, 0.9);
        const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
        KanLayer kl = KanLayer::init(2, 2, grid, rng);
        GrKanLayer gl = GrKanLayer::init_variance_preserving(2, 1, 2, Act::swish, rng);
        const double err = ad::finite_diff_check(
            [&](const Var& v) {
                Var m = ad::reshape(v, 3, 2);
                return ad::mean(gl.forward(kl.forward(m)));
            },
            x0, 1e-5);
        check("finite differences through kan+grkan (<1e-4)", err < 1e-4);
    }

    // Adam against the hand-computed first step.
    {
        TrainConfig cfg;
        Var theta(Tensor::scalar(0.0), true);
        Adam opt({theta}, cfg);
        theta.grad()[0] = 1.0;
        opt.step();
        check("adam first step ~ -lr", std::abs(theta.value()[0] + 1e-3) < 1e-8);
    }

    // Signal generator determinism and structure.
    {
        SignalConfig cfg;
        cfg.seed = 7;
        const Signal a = generate_signal(cfg);
        const Signal b = generate_signal(cfg);
        bool ok = a.value.size() == 500 && a.value == b.value;
        SignalConfig quiet = cfg;
        quiet.noise_std = 0.0;
        const Signal q = generate_signal(quiet);
        for (size_t k = 0; k < q.value.size() && ok; ++k) {
            bool in_pause = false;
            for (const Segment& seg : q.segments)
                if (!seg.is_syllable && q.time[k] >= seg.t0 && q.time[k] < seg.t1)
                    in_pause = true;
            if (in_pause && q.value[k] != 0.0) ok = false;
        }
        check("signal determinism, length, silent pauses", ok);
    }

    // Denoiser length round-trip and grkan/relu param parity.
    {
        bool ok = true;
        for (int depth = 1; depth <= 3; ++depth) {
            DenoiserSpec spec;
            spec.depth = depth;
            Denoiser model = Denoiser::build(spec, 1);
            ad::NoGradGuard no_grad;
            Var x(Tensor::zeros(512, 1), false);
            if (model.forward(x).value().rows() != 512) ok = false;
            DenoiserSpec gspec = spec;
            gspec.kind = DnKind::grkan;
            const size_t sites = static_cast<size_t>(2 * depth - 1);
            if (Denoiser::build(gspec, 1).param_count() !=
                model.param_count() + sites * 4 * 10)
                ok = false;
        }
        check("denoiser shape round-trip and param parity", ok);
    }

    // Report serialization round-trip.
    {
        json j = {{"schema_version", kSchemaVersion},
                  {"generated_at", iso_now()},
                  {"values", {1.0, 0.25, 1e-9}},
                  {"nested", {{"wall_time_s", 1.25}, {"keep", true}}}};
        const std::string s = report_to_string(j);
        const bool round = report_to_string(json::parse(s)) == s;
        const json stripped = strip_volatile(j);
        const bool gone = !stripped.contains("generated_at") &&
                          !stripped["nested"].contains("wall_time_s") &&
                          stripped["nested"]["keep"] == true;
        check("report round-trip and volatile stripping", round && gone);
    }

    return all_ok;
}

}  // namespace grkan::bench
