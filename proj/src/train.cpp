#include "grkan/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace grkan {

using ad::Tensor;
using ad::Var;

Var mse_loss(const Var& pred, const Var& target) {
    if (!pred.value().same_shape(target.value()))
        throw std::invalid_argument("mse_loss: shape mismatch " + pred.value().shape_str() +
                                    " vs " + target.value().shape_str());
    Var d = pred - target;
    return ad::mean(d * d);
}

Var l1_loss(const Var& pred, const Var& target) {
    if (!pred.value().same_shape(target.value()))
        throw std::invalid_argument("l1_loss: shape mismatch " + pred.value().shape_str() +
                                    " vs " + target.value().shape_str());
    return ad::mean(ad::abs(pred - target));
}

Adam::Adam(std::vector<Var> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Var& p : params_) {
        m_.push_back(Tensor::zeros_like(p.value()));
        v_.push_back(Tensor::zeros_like(p.value()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
        Var& p = params_[i];
        if (!p.grad().all_finite())
            throw std::runtime_error("Adam: non-finite gradient in parameter " +
                                     std::to_string(i) + " at step " + std::to_string(t_));
        const size_t n = p.value().size();
        for (size_t j = 0; j < n; ++j) {
            const double g = p.grad()[j];
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
            if (cfg_.optimizer == Optimizer::adamw)
                p.value()[j] -= cfg_.lr * cfg_.weight_decay * p.value()[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            p.value()[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        p.zero_grad();
    }
}

double fraction_nonincreasing(const RunTrace& trace) {
    const auto& c = trace.checkpoints;
    if (c.size() < 2) return 1.0;
    size_t good = 0;
    for (size_t i = 1; i < c.size(); ++i)
        if (c[i].loss <= c[i - 1].loss) ++good;
    return static_cast<double>(good) / (c.size() - 1);
}

RunTrace train_run(const std::function<Var()>& loss_fn, std::vector<Var> params,
                   const TrainConfig& cfg) {
    if (cfg.steps <= 0) throw std::invalid_argument("train_run: steps must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    RunTrace trace;
    trace.seed = cfg.seed;
    const int cadence = std::max(1, cfg.steps / 100);
    Adam opt(params, cfg);

    // Early-stop bookkeeping: loss sampled every `window` steps.
    double window_ref = 0.0;
    bool have_ref = false;

    double last_loss = 0.0;
    for (int step = 1; step <= cfg.steps; ++step) {
        {
            ad::Tape tape;
            Var loss = loss_fn();
            last_loss = loss.value().item();
            tape.backward(loss);
        }
        trace.steps_run = step;
        if (!std::isfinite(last_loss) || last_loss > 1e6) {
            trace.diverged = true;
            trace.abort_reason = "divergence at step " + std::to_string(step) + " (loss " +
                                 std::to_string(last_loss) + ")";
            trace.checkpoints.push_back({step, last_loss});
            break;
        }
        opt.step();
        if (step % cadence == 0 || step == cfg.steps)
            trace.checkpoints.push_back({step, last_loss});
        if (cfg.early_stop && step % cfg.early_stop->window == 0) {
            if (have_ref) {
                const double improvement =
                    (window_ref - last_loss) / std::max(1e-30, std::abs(window_ref));
                if (improvement < cfg.early_stop->rel_tol) break;
            }
            window_ref = last_loss;
            have_ref = true;
        }
    }
    trace.final_loss = last_loss;
    trace.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return trace;
}

}  // namespace grkan
