#include "grkan/signal.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "grkan/rng.hpp"

namespace grkan {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Signal generate_signal(const SignalConfig& cfg) {
    if (cfg.duration <= 0.0 || cfg.sample_rate <= 0.0 || cfg.noise_std < 0.0 ||
        cfg.syllable_min <= 0.0 || cfg.pause_min <= 0.0 ||
        cfg.syllable_max < cfg.syllable_min || cfg.pause_max < cfg.pause_min)
        throw std::invalid_argument("generate_signal: invalid config");
    Rng rng(cfg.seed);
    Signal s;

    // Tile [0, duration) with alternating syllables and pauses; the last
    // segment is truncated at the signal end. Draw order per syllable:
    // duration, envelope scale, one phase per formant; per pause: duration.
    double t = 0.0;
    bool syllable = true;
    while (t < cfg.duration) {
        Segment seg;
        seg.is_syllable = syllable;
        seg.t0 = t;
        if (syllable) {
            seg.drawn_dur = rng.uniform(cfg.syllable_min, cfg.syllable_max);
            seg.scale = rng.uniform(cfg.envelope_lo, cfg.envelope_hi);
            for (size_t f = 0; f < cfg.formants.size(); ++f)
                seg.formant_phases.push_back(rng.uniform(0.0, kTwoPi));
        } else {
            seg.drawn_dur = rng.uniform(cfg.pause_min, cfg.pause_max);
        }
        t += seg.drawn_dur;
        seg.t1 = std::min(t, cfg.duration);
        s.segments.push_back(std::move(seg));
        syllable = !syllable;
    }

    const auto n = static_cast<size_t>(std::llround(cfg.duration * cfg.sample_rate));
    s.time.resize(n);
    s.value.resize(n);
    size_t seg_idx = 0;
    for (size_t k = 0; k < n; ++k) {
        const double tk = static_cast<double>(k) / cfg.sample_rate;
        s.time[k] = tk;
        while (tk >= s.segments[seg_idx].t1) ++seg_idx;
        const Segment& seg = s.segments[seg_idx];
        if (!seg.is_syllable) {
            s.value[k] = 0.0;
            continue;
        }
        const double tau = tk - seg.t0;
        // Carrier phase is the closed-form integral of the instantaneous
        // frequency f0 * (1 + d1*sin(2*pi*r1*tau) + d2*cos(2*pi*r2*tau)).
        const double phase =
            kTwoPi * cfg.base_freq * tau +
            (cfg.base_freq * cfg.freq_mod_depth1 / cfg.freq_mod_rate1) *
                (1.0 - std::cos(kTwoPi * cfg.freq_mod_rate1 * tau)) +
            (cfg.base_freq * cfg.freq_mod_depth2 / cfg.freq_mod_rate2) *
                std::sin(kTwoPi * cfg.freq_mod_rate2 * tau);
        double v = std::sin(phase);
        const double formant_dev =
            cfg.formant_mod_depth * std::sin(kTwoPi * cfg.formant_mod_rate * tau);
        for (size_t f = 0; f < cfg.formants.size(); ++f) {
            const double freq = cfg.formants[f] + formant_dev;
            v += cfg.formant_rel_amp *
                 std::sin(kTwoPi * freq * tau + seg.formant_phases[f]);
        }
        const double envelope =
            seg.scale * std::exp(-cfg.envelope_decay * tau / seg.drawn_dur);
        s.value[k] = envelope * v;
    }

    // Noise is drawn from a forked stream so the segment draws above are
    // identical with and without noise; noise_std == 0 adds nothing.
    if (cfg.noise_std > 0.0) {
        Rng noise = rng.fork(0x6e6f697365ULL);  // "noise"
        for (size_t k = 0; k < n; ++k) s.value[k] += noise.normal(0.0, cfg.noise_std);
    }
    return s;
}

SignalDataset to_dataset(const Signal& s, double map_lo, double map_hi) {
    if (s.time.empty()) throw std::invalid_argument("to_dataset: empty signal");
    if (map_lo >= map_hi) throw std::invalid_argument("to_dataset: degenerate map");
    SignalDataset d;
    d.map_lo = map_lo;
    d.map_hi = map_hi;
    d.raw_time = s.time;
    d.targets = s.value;
    d.inputs.resize(s.time.size());
    for (size_t i = 0; i < s.time.size(); ++i) d.inputs[i] = d.to_norm(s.time[i]);
    return d;
}

void write_signal_csv(const std::string& path, const Signal& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    for (size_t i = 0; i < s.time.size(); ++i) out << s.time[i] << "," << s.value[i] << "\n";
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace grkan
