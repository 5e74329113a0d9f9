#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "grkan/activations.hpp"
#include "grkan/autodiff.hpp"
#include "grkan/signal.hpp"
#include "grkan/train.hpp"

namespace grkan {

// Strided 1-D convolution over a time-major L x C_in feature map.
// Weights are C_out x (C_in * K); output is L_out x C_out with
// L_out = (L - K)/S + 1 (caller pads so S divides L - K).
ad::Var conv1d(const ad::Var& x, const ad::Var& w, const ad::Var& b, size_t in_ch,
               size_t out_ch, size_t kernel, size_t stride);

// Transposed counterpart: weights C_in x (C_out * K), L_out = (L-1)*S + K.
ad::Var conv_transpose1d(const ad::Var& x, const ad::Var& w, const ad::Var& b,
                         size_t in_ch, size_t out_ch, size_t kernel, size_t stride);

enum class DnSite { enc, dec, both, none };
enum class DnKind { relu, grkan };

std::string site_name(DnSite s);
DnSite site_from_name(const std::string& name);

struct DenoiserSpec {
    int depth = 2;  // encoder/decoder levels (1-3 at this scale)
    int hidden = 16;  // channels after the first level; doubles per level
    int kernel = 8;
    int stride = 4;
    DnSite site = DnSite::both;  // which blocks carry activations at all
    DnKind kind = DnKind::relu;  // activation family at those sites
    int groups = 4;              // grkan: k = min(groups, channel count)
};

// U-Net style time-domain denoiser: depth strided conv encoder blocks,
// identity bottleneck, depth transposed-conv decoder blocks with additive
// skip connections; the last decoder block never has an activation.
// Inputs are padded symmetrically per level so decoding inverts every length
// exactly.
class Denoiser {
public:
    static Denoiser build(const DenoiserSpec& spec, uint64_t seed);

    ad::Var forward(const ad::Var& x) const;  // L x 1 -> L x 1

    // Forward that also exposes the activated encoder outputs and each
    // decoder block's input (after the skip addition), for wiring tests.
    ad::Var forward_traced(const ad::Var& x, std::vector<ad::Var>* enc_outputs,
                           std::vector<ad::Var>* dec_inputs) const;

    std::vector<ad::Var> params() const;
    std::vector<std::pair<std::string, size_t>> param_items() const;
    size_t param_count() const;
    const DenoiserSpec& spec() const { return spec_; }

    // Test hook: zero every decoder conv weight and bias in place.
    void zero_decoder_convs();

private:
    struct Site {
        bool active = false;             // any activation here?
        std::vector<ad::Var> nums, dens;  // grkan coefficients (empty for relu)
    };
    ad::Var apply_site(const Site& site, const ad::Var& x) const;

    DenoiserSpec spec_;
    std::vector<ad::Var> enc_w_, enc_b_, dec_w_, dec_b_;
    std::vector<size_t> channels_;  // per level: 1, hidden, hidden*2, ...
    std::vector<Site> enc_sites_, dec_sites_;
};

struct NoisyPair {
    std::vector<double> clean;
    std::vector<double> noisy;
    double snr_db = 0.0;
    uint64_t seed = 0;
};

struct DenoiseData {
    std::vector<NoisyPair> train;
    std::vector<NoisyPair> heldout;
};

// `count` pairs built from clean synthetic signals with distinct derived
// seeds (noise_std = 0) plus white Gaussian noise scaled so the measured SNR
// equals snr_db exactly; 80/20 train/held-out split with disjoint seeds.
DenoiseData make_noisy_pairs(int count, double snr_db, uint64_t seed);

struct DenoiseRun {
    DenoiserSpec spec;
    uint64_t seed = 0;
    size_t params = 0;
    double train_l1 = 0.0;
    double heldout_l1 = 0.0;
    RunTrace trace;
};

// Trains one variant on the train split with L1 loss and reports clean-pass
// train/held-out L1. batch = pairs per step drawn in shuffled-epoch order
// (0 = full batch); the shuffle stream is forked from cfg.seed.
DenoiseRun train_denoiser(const DenoiserSpec& spec, const DenoiseData& data,
                          const TrainConfig& cfg, size_t batch = 0);

}  // namespace grkan
