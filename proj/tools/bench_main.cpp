#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grkan/bench.hpp"

namespace {

using namespace grkan;
using namespace grkan::bench;

int cmd_table1(const Table1Options& opts) {
    const Table1Result res = run_table1(opts);
    std::cout << "method   params  median_mse\n";
    for (const auto& [m, med] : res.medians) {
        size_t params = 0;
        for (const Table1Run& r : res.runs)
            if (r.method == m) params = r.params;
        std::cout << std::left << std::setw(9) << method_name(m) << std::setw(8) << params
                  << std::setprecision(6) << med << "\n";
    }
    std::cout << "orderings " << (res.orderings_ok ? "OK" : "VIOLATED") << "\n";
    std::cout << "report: " << opts.out_dir << "/table1_report.json\n";
    return res.orderings_ok ? 0 : 2;
}

int cmd_denoise(const DenoiseOptions& opts) {
    const DenoiseResult res = run_denoise(opts);
    std::cout << "depth  site  kind   params  median_heldout_l1\n";
    for (const auto& v : res.variants)
        std::cout << std::left << std::setw(7) << v.depth << std::setw(6) << site_name(v.site)
                  << std::setw(7) << (v.kind == DnKind::relu ? "relu" : "grkan")
                  << std::setw(8) << v.params << std::setprecision(6) << v.median_heldout_l1
                  << "\n";
    std::cout << "direction " << (res.direction_ok ? "OK" : "VIOLATED") << "\n";
    std::cout << "report: " << opts.out_dir << "/denoise_report.json\n";
    return res.direction_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GR-KAN / KAN signal-fitting benchmark"};
    app.require_subcommand(1);

    Table1Options t1;
    CLI::App* table1 = app.add_subcommand("table1", "Train all model families on the synthetic signal");
    table1->add_option("--seeds", t1.seeds, "Training seeds")->delimiter(',');
    table1->add_option("--steps", t1.steps, "Adam steps per run");
    table1->add_flag("--early-stop", t1.early_stop, "Stop when a 10k-step window improves < 1%");
    table1->add_option("--out", t1.out_dir, "Output directory");
    table1->add_option("--threads", t1.threads, "Worker threads (0 = auto)");

    DenoiseOptions dn;
    CLI::App* denoise = app.add_subcommand("denoise", "Compare relu vs grkan activation sites in the denoiser");
    denoise->add_option("--depths", dn.depths, "Encoder/decoder depths")->delimiter(',');
    denoise->add_option("--snr-db", dn.snr_db, "Input signal-to-noise ratio (dB)");
    denoise->add_option("--seeds", dn.seeds, "Training seeds")->delimiter(',');
    denoise->add_option("--steps", dn.steps, "Adam steps per run");
    denoise->add_option("--pairs", dn.pair_count, "Clean/noisy pair count");
    denoise->add_option("--batch", dn.batch_size, "Pairs per step (0 = full batch)");
    denoise->add_option("--lr", dn.lr, "Adam learning rate");
    denoise->add_option("--out", dn.out_dir, "Output directory");
    denoise->add_option("--threads", dn.threads, "Worker threads (0 = auto)");

    uint64_t sig_seed = 0;
    std::string sig_out = "out/signal.csv";
    CLI::App* signal_cmd = app.add_subcommand("signal", "Write one generated signal as CSV");
    signal_cmd->add_option("--seed", sig_seed, "Generator seed");
    signal_cmd->add_option("--out", sig_out, "Output CSV path");

    CLI::App* selftest_cmd = app.add_subcommand("selftest", "Run the compact invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (table1->parsed()) return cmd_table1(t1);
        if (denoise->parsed()) return cmd_denoise(dn);
        if (signal_cmd->parsed()) {
            SignalConfig cfg;
            cfg.seed = sig_seed;
            std::filesystem::create_directories(
                std::filesystem::path(sig_out).parent_path().empty()
                    ? "."
                    : std::filesystem::path(sig_out).parent_path().string());
            write_signal_csv(sig_out, generate_signal(cfg));
            std::cout << "wrote " << sig_out << "\n";
            return 0;
        }
        if (selftest_cmd->parsed()) return bench::selftest(std::cout) ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
