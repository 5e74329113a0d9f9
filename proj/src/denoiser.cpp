#include "grkan/denoiser.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "grkan/rng.hpp"

namespace grkan {

using ad::Node;
using ad::Tensor;
using ad::Var;

Var conv1d(const Var& x, const Var& w, const Var& b, size_t in_ch, size_t out_ch,
           size_t kernel, size_t stride) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.cols() != in_ch)
        throw std::invalid_argument("conv1d: input " + xv.shape_str() + " does not have " +
                                    std::to_string(in_ch) + " channels");
    if (xv.rows() < kernel)
        throw std::invalid_argument("conv1d: input length " + std::to_string(xv.rows()) +
                                    " shorter than kernel " + std::to_string(kernel));
    if (w.value().rows() != out_ch || w.value().cols() != in_ch * kernel)
        throw std::invalid_argument("conv1d: weight " + w.value().shape_str() +
                                    " does not match channels/kernel");
    if (b.value().size() != out_ch)
        throw std::invalid_argument("conv1d: bias " + b.value().shape_str() +
                                    " does not match " + std::to_string(out_ch) +
                                    " output channels");
    const size_t len_out = (xv.rows() - kernel) / stride + 1;
    Tensor out = Tensor::zeros(len_out, out_ch);
    for (size_t t = 0; t < len_out; ++t)
        for (size_t o = 0; o < out_ch; ++o) {
            double acc = b.value()[o];
            const double* wo = w.value().ptr() + o * in_ch * kernel;
            for (size_t c = 0; c < in_ch; ++c)
                for (size_t k = 0; k < kernel; ++k)
                    acc += wo[c * kernel + k] * xv.at(t * stride + k, c);
            out.at(t, o) = acc;
        }
    return ad::make_op(
        "conv1d", std::move(out), {x, w, b},
        [in_ch, out_ch, kernel, stride](Node& self) {
            Node& X = *self.inputs[0];
            Node& W = *self.inputs[1];
            Node& B = *self.inputs[2];
            const size_t len_out = self.value.rows();
            for (size_t t = 0; t < len_out; ++t)
                for (size_t o = 0; o < out_ch; ++o) {
                    const double g = self.grad.at(t, o);
                    if (g == 0.0) continue;
                    if (B.requires_grad) B.grad[o] += g;
                    const double* wo = W.value.ptr() + o * in_ch * kernel;
                    double* dwo = W.grad.ptr() + o * in_ch * kernel;
                    for (size_t c = 0; c < in_ch; ++c)
                        for (size_t k = 0; k < kernel; ++k) {
                            if (X.requires_grad)
                                X.grad.at(t * stride + k, c) += g * wo[c * kernel + k];
                            if (W.requires_grad)
                                dwo[c * kernel + k] += g * X.value.at(t * stride + k, c);
                        }
                }
        });
}

Var conv_transpose1d(const Var& x, const Var& w, const Var& b, size_t in_ch,
                     size_t out_ch, size_t kernel, size_t stride) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.cols() != in_ch)
        throw std::invalid_argument("conv_transpose1d: input " + xv.shape_str() +
                                    " does not have " + std::to_string(in_ch) +
                                    " channels");
    if (w.value().rows() != in_ch || w.value().cols() != out_ch * kernel)
        throw std::invalid_argument("conv_transpose1d: weight " + w.value().shape_str() +
                                    " does not match channels/kernel");
    if (b.value().size() != out_ch)
        throw std::invalid_argument("conv_transpose1d: bias " + b.value().shape_str() +
                                    " does not match " + std::to_string(out_ch) +
                                    " output channels");
    const size_t len_out = (xv.rows() - 1) * stride + kernel;
    Tensor out = Tensor::zeros(len_out, out_ch);
    for (size_t t = 0; t < xv.rows(); ++t)
        for (size_t c = 0; c < in_ch; ++c) {
            const double xi = xv.at(t, c);
            if (xi == 0.0) continue;
            const double* wc = w.value().ptr() + c * out_ch * kernel;
            for (size_t o = 0; o < out_ch; ++o)
                for (size_t k = 0; k < kernel; ++k)
                    out.at(t * stride + k, o) += xi * wc[o * kernel + k];
        }
    for (size_t t = 0; t < len_out; ++t)
        for (size_t o = 0; o < out_ch; ++o) out.at(t, o) += b.value()[o];
    return ad::make_op(
        "conv_transpose1d", std::move(out), {x, w, b},
        [in_ch, out_ch, kernel, stride](Node& self) {
            Node& X = *self.inputs[0];
            Node& W = *self.inputs[1];
            Node& B = *self.inputs[2];
            const size_t len_in = X.value.rows();
            if (B.requires_grad) {
                const size_t len_out = self.value.rows();
                for (size_t t = 0; t < len_out; ++t)
                    for (size_t o = 0; o < out_ch; ++o) B.grad[o] += self.grad.at(t, o);
            }
            for (size_t t = 0; t < len_in; ++t)
                for (size_t c = 0; c < in_ch; ++c) {
                    const double xi = X.value.at(t, c);
                    const double* wc = W.value.ptr() + c * out_ch * kernel;
                    double* dwc = W.grad.ptr() + c * out_ch * kernel;
                    double dx = 0.0;
                    for (size_t o = 0; o < out_ch; ++o)
                        for (size_t k = 0; k < kernel; ++k) {
                            const double g = self.grad.at(t * stride + k, o);
                            dx += g * wc[o * kernel + k];
                            if (W.requires_grad) dwc[o * kernel + k] += g * xi;
                        }
                    if (X.requires_grad) X.grad.at(t, c) += dx;
                }
        });
}

std::string site_name(DnSite s) {
    switch (s) {
        case DnSite::enc: return "enc";
        case DnSite::dec: return "dec";
        case DnSite::both: return "both";
        case DnSite::none: return "none";
    }
    return "?";
}

DnSite site_from_name(const std::string& name) {
    for (DnSite s : {DnSite::enc, DnSite::dec, DnSite::both, DnSite::none})
        if (site_name(s) == name) return s;
    throw std::invalid_argument("unknown activation site: " + name);
}

Denoiser Denoiser::build(const DenoiserSpec& spec, uint64_t seed) {
    if (spec.depth < 1 || spec.depth > 3)
        throw std::invalid_argument("Denoiser: depth must be 1-3, got " +
                                    std::to_string(spec.depth));
    if (spec.kernel <= spec.stride)
        throw std::invalid_argument("Denoiser: kernel must exceed stride");
    Denoiser m;
    m.spec_ = spec;
    m.channels_.push_back(1);
    for (int i = 1; i <= spec.depth; ++i)
        m.channels_.push_back(static_cast<size_t>(spec.hidden) << (i - 1));

    Rng rng(seed);
    auto make_conv = [&](size_t rows, size_t cols, size_t fan_in, std::vector<Var>& ws,
                         std::vector<Var>& bs, size_t bias_n) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor w = Tensor::zeros(rows, cols);
        for (size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
        Tensor b = Tensor::zeros(bias_n);
        for (size_t i = 0; i < bias_n; ++i) b[i] = rng.uniform(-bound, bound);
        ws.push_back(Var(std::move(w), true));
        bs.push_back(Var(std::move(b), true));
    };
    const auto k = static_cast<size_t>(spec.kernel);
    for (int i = 1; i <= spec.depth; ++i)
        make_conv(m.channels_[i], m.channels_[i - 1] * k, m.channels_[i - 1] * k,
                  m.enc_w_, m.enc_b_, m.channels_[i]);
    for (int j = 1; j <= spec.depth; ++j) {
        const size_t cin = m.channels_[spec.depth - j + 1];
        const size_t cout = m.channels_[spec.depth - j];
        make_conv(cin, cout * k, cin * k, m.dec_w_, m.dec_b_, cout);
    }

    auto make_site = [&](bool active, size_t channels) {
        Site s;
        s.active = active;
        if (!active || spec.kind == DnKind::relu) return s;
        const size_t groups = std::min<size_t>(spec.groups, channels);
        if (channels % groups != 0)
            throw std::invalid_argument("Denoiser: " + std::to_string(groups) +
                                        " groups do not divide " +
                                        std::to_string(channels) + " channels");
        const RationalFit& fit = rational_fit_cached(Act::swish, -3.0, 3.0, 1000);
        for (size_t g = 0; g < groups; ++g) {
            s.nums.push_back(Var(Tensor::vec(fit.coeffs.num), true));
            s.dens.push_back(Var(Tensor::vec(fit.coeffs.den), true));
        }
        return s;
    };
    const bool enc_on = spec.site == DnSite::enc || spec.site == DnSite::both;
    const bool dec_on = spec.site == DnSite::dec || spec.site == DnSite::both;
    for (int i = 1; i <= spec.depth; ++i)
        m.enc_sites_.push_back(make_site(enc_on, m.channels_[i]));
    for (int j = 1; j <= spec.depth; ++j) {
        const bool last = j == spec.depth;  // the last decoder block stays linear
        m.dec_sites_.push_back(make_site(dec_on && !last, m.channels_[spec.depth - j]));
    }
    return m;
}

Var Denoiser::apply_site(const Site& site, const Var& x) const {
    if (!site.active) return x;
    if (spec_.kind == DnKind::relu) return ad::maximum(x, 0.0);
    return grouped_rational(x, site.nums, site.dens);
}

Var Denoiser::forward(const Var& x) const { return forward_traced(x, nullptr, nullptr); }

Var Denoiser::forward_traced(const Var& x, std::vector<Var>* enc_outputs,
                             std::vector<Var>* dec_inputs) const {
    const auto n = spec_.depth;
    const auto k = static_cast<size_t>(spec_.kernel);
    const auto s = static_cast<size_t>(spec_.stride);
    std::vector<std::pair<size_t, size_t>> pads(n);
    std::vector<Var> enc_out;
    Var cur = x;
    for (int i = 1; i <= n; ++i) {
        const size_t len = cur.rows();
        // Symmetric zero padding so the stride divides evenly (padding up to
        // one kernel when a deep level runs short); the decoder crops the
        // same amounts, making the length round-trip exact.
        const size_t total = len < k ? k - len : (s - ((len - k) % s)) % s;
        pads[i - 1] = {total / 2, total - total / 2};
        if (total > 0) cur = ad::pad_rows(cur, pads[i - 1].first, pads[i - 1].second);
        cur = conv1d(cur, enc_w_[i - 1], enc_b_[i - 1], channels_[i - 1], channels_[i], k, s);
        cur = apply_site(enc_sites_[i - 1], cur);
        enc_out.push_back(cur);
    }
    if (enc_outputs) *enc_outputs = enc_out;
    Var d = enc_out.back();  // identity bottleneck
    for (int j = 1; j <= n; ++j) {
        Var u = d + enc_out[n - j];  // skip: encoder level n-j+1 feeds block j
        if (dec_inputs) dec_inputs->push_back(u);
        Var v = conv_transpose1d(u, dec_w_[j - 1], dec_b_[j - 1], channels_[n - j + 1],
                                 channels_[n - j], k, s);
        const auto [left, right] = pads[n - j];
        if (left + right > 0) v = ad::crop_rows(v, left, right);
        if (j < n) v = apply_site(dec_sites_[j - 1], v);
        d = v;
    }
    return d;
}

std::vector<Var> Denoiser::params() const {
    std::vector<Var> ps;
    auto add_site = [&](const Site& site) {
        for (const Var& v : site.nums) ps.push_back(v);
        for (const Var& v : site.dens) ps.push_back(v);
    };
    for (int i = 0; i < spec_.depth; ++i) {
        ps.push_back(enc_w_[i]);
        ps.push_back(enc_b_[i]);
        add_site(enc_sites_[i]);
    }
    for (int j = 0; j < spec_.depth; ++j) {
        ps.push_back(dec_w_[j]);
        ps.push_back(dec_b_[j]);
        add_site(dec_sites_[j]);
    }
    return ps;
}

std::vector<std::pair<std::string, size_t>> Denoiser::param_items() const {
    std::vector<std::pair<std::string, size_t>> items;
    auto site_count = [](const Site& s) {
        size_t n = 0;
        for (const Var& v : s.nums) n += v.size();
        for (const Var& v : s.dens) n += v.size();
        return n;
    };
    for (int i = 0; i < spec_.depth; ++i) {
        items.emplace_back("enc" + std::to_string(i + 1) + ".conv",
                           enc_w_[i].size() + enc_b_[i].size());
        if (site_count(enc_sites_[i]) > 0)
            items.emplace_back("enc" + std::to_string(i + 1) + ".act",
                               site_count(enc_sites_[i]));
    }
    for (int j = 0; j < spec_.depth; ++j) {
        items.emplace_back("dec" + std::to_string(j + 1) + ".conv",
                           dec_w_[j].size() + dec_b_[j].size());
        if (site_count(dec_sites_[j]) > 0)
            items.emplace_back("dec" + std::to_string(j + 1) + ".act",
                               site_count(dec_sites_[j]));
    }
    return items;
}

size_t Denoiser::param_count() const {
    size_t n = 0;
    for (const auto& [name, c] : param_items()) n += c;
    return n;
}

void Denoiser::zero_decoder_convs() {
    for (Var& w : dec_w_) w.value().fill(0.0);
    for (Var& b : dec_b_) b.value().fill(0.0);
}

DenoiseData make_noisy_pairs(int count, double snr_db, uint64_t seed) {
    if (count < 1) throw std::invalid_argument("make_noisy_pairs: count must be >= 1");
    DenoiseData data;
    const int held = count / 5;  // 80/20, disjoint by distinct derived seeds
    for (int idx = 0; idx < count; ++idx) {
        NoisyPair pair;
        pair.snr_db = snr_db;
        pair.seed = splitmix64(seed ^ splitmix64(0x70617972ULL + idx));
        SignalConfig cfg;
        cfg.noise_std = 0.0;
        cfg.seed = pair.seed;
        pair.clean = generate_signal(cfg).value;
        if (std::isinf(snr_db)) {
            pair.noisy = pair.clean;
        } else {
            double p_clean = 0.0;
            for (double v : pair.clean) p_clean += v * v;
            p_clean /= pair.clean.size();
            Rng noise(splitmix64(pair.seed ^ 0x736e72ULL));
            std::vector<double> raw(pair.clean.size());
            double p_raw = 0.0;
            for (double& v : raw) {
                v = noise.normal();
                p_raw += v * v;
            }
            p_raw /= raw.size();
            // Scale the draw to hit the requested SNR exactly as measured.
            const double target_power = p_clean / std::pow(10.0, snr_db / 10.0);
            const double factor = p_raw > 0.0 ? std::sqrt(target_power / p_raw) : 0.0;
            pair.noisy = pair.clean;
            for (size_t i = 0; i < raw.size(); ++i) pair.noisy[i] += factor * raw[i];
        }
        if (idx < count - held)
            data.train.push_back(std::move(pair));
        else
            data.heldout.push_back(std::move(pair));
    }
    return data;
}

namespace {

double mean_l1(const Denoiser& model, const std::vector<NoisyPair>& pairs) {
    ad::NoGradGuard no_grad;
    double acc = 0.0;
    for (const auto& p : pairs) {
        Var x(Tensor::matrix(p.noisy.size(), 1, p.noisy), false);
        Var y(Tensor::matrix(p.clean.size(), 1, p.clean), false);
        acc += l1_loss(model.forward(x), y).value().item();
    }
    return acc / pairs.size();
}

}  // namespace

DenoiseRun train_denoiser(const DenoiserSpec& spec, const DenoiseData& data,
                          const TrainConfig& cfg, size_t batch) {
    if (data.train.empty() || data.heldout.empty())
        throw std::invalid_argument("train_denoiser: need nonempty train and held-out splits");
    Denoiser model = Denoiser::build(spec, cfg.seed);
    std::vector<Var> inputs, targets;
    for (const auto& p : data.train) {
        inputs.push_back(Var(Tensor::matrix(p.noisy.size(), 1, p.noisy), false));
        targets.push_back(Var(Tensor::matrix(p.clean.size(), 1, p.clean), false));
    }
    const size_t n = inputs.size();
    const size_t per_step = (batch == 0 || batch > n) ? n : batch;
    // Shuffled-epoch order; the stream is forked from the run seed so reruns
    // of an identical config replay the same batches.
    Rng order_rng = Rng(cfg.seed).fork(0x6261746368ULL);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    size_t cursor = n;
    auto loss_fn = [&]() {
        Var acc = ad::constant(0.0);
        for (size_t b = 0; b < per_step; ++b) {
            if (cursor == n) {
                for (size_t i = n; i > 1; --i)
                    std::swap(order[i - 1], order[order_rng.next_u64() % i]);
                cursor = 0;
            }
            const size_t j = order[cursor++];
            acc = acc + l1_loss(model.forward(inputs[j]), targets[j]);
        }
        return acc / static_cast<double>(per_step);
    };
    DenoiseRun run;
    run.spec = spec;
    run.seed = cfg.seed;
    run.params = model.param_count();
    run.trace = train_run(loss_fn, model.params(), cfg);
    run.train_l1 = mean_l1(model, data.train);
    run.heldout_l1 = mean_l1(model, data.heldout);
    return run;
}

}  // namespace grkan
