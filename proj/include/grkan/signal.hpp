#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace grkan {

// Synthetic speech-dynamics signal: alternating decaying-envelope syllables
// and silent pauses, a frequency-modulated low-frequency carrier, and three
// modulated formant tones sampled far below their Nyquist rate (aliasing is
// part of the construction and accepted).
struct SignalConfig {
    double duration = 5.0;       // seconds
    double sample_rate = 100.0;  // Hz
    double syllable_min = 0.150, syllable_max = 0.250;  // seconds
    double pause_min = 0.020, pause_max = 0.100;        // seconds
    double base_freq = 5.0;  // Hz nominal carrier
    double freq_mod_depth1 = 0.3, freq_mod_rate1 = 0.8;  // sin term
    double freq_mod_depth2 = 0.2, freq_mod_rate2 = 1.3;  // cos term
    std::vector<double> formants = {500.0, 1500.0, 3000.0};  // Hz
    double formant_mod_depth = 40.0;  // Hz deviation
    double formant_mod_rate = 2.0;    // Hz
    double formant_rel_amp = 0.25;
    double envelope_lo = 0.5, envelope_hi = 1.5;  // per-syllable scale draw
    double envelope_decay = 3.0;                  // exp(-decay * tau / dur)
    double noise_std = 0.05;
    uint64_t seed = 0;
};

struct Segment {
    bool is_syllable = false;
    double t0 = 0.0, t1 = 0.0;  // [t0, t1) in signal seconds
    double drawn_dur = 0.0;     // duration before truncation at the signal end
    double scale = 0.0;         // envelope draw (syllables only)
    std::vector<double> formant_phases;  // one per formant (syllables only)
};

struct Signal {
    std::vector<double> time;   // seconds, length duration * sample_rate
    std::vector<double> value;
    std::vector<Segment> segments;  // covers [0, duration) without overlap
};

Signal generate_signal(const SignalConfig& cfg);

// Regression view: inputs are raw times affinely mapped onto [-1, 1].
struct SignalDataset {
    std::vector<double> raw_time;
    std::vector<double> inputs;   // normalized time
    std::vector<double> targets;  // amplitude
    double map_lo = 0.0, map_hi = 5.0;  // [map_lo, map_hi] -> [-1, 1]

    double to_norm(double t) const { return 2.0 * (t - map_lo) / (map_hi - map_lo) - 1.0; }
    double to_raw(double u) const { return map_lo + (u + 1.0) * 0.5 * (map_hi - map_lo); }
};

SignalDataset to_dataset(const Signal& s, double map_lo, double map_hi);

// Headerless CSV rows "time,value"; throws std::runtime_error on I/O failure.
void write_signal_csv(const std::string& path, const Signal& s);

}  // namespace grkan
