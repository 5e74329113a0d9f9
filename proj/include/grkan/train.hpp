#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "grkan/autodiff.hpp"

namespace grkan {

// Mean squared / mean absolute error over equal-length predictions and targets.
ad::Var mse_loss(const ad::Var& pred, const ad::Var& target);
ad::Var l1_loss(const ad::Var& pred, const ad::Var& target);

enum class Optimizer { adam, adamw };

struct EarlyStop {
    int window = 10000;     // compare against the loss this many steps back
    double rel_tol = 0.01;  // stop when relative improvement falls below this
};

struct TrainConfig {
    int steps = 300000;
    double lr = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // adamw only (decoupled)
    uint64_t seed = 0;
    std::optional<EarlyStop> early_stop;  // off by default: honor the full step budget
};

// First-moment/second-moment state per parameter tensor.
class Adam {
public:
    Adam(std::vector<ad::Var> params, const TrainConfig& cfg);

    // Applies one update from the accumulated gradients, then zeroes them.
    // Non-finite gradients throw std::runtime_error naming the parameter slot.
    void step();

    int steps_taken() const { return t_; }
    const std::vector<ad::Var>& params() const { return params_; }

private:
    std::vector<ad::Var> params_;
    std::vector<ad::Tensor> m_, v_;
    TrainConfig cfg_;
    int t_ = 0;
};

struct Checkpoint {
    int step = 0;
    double loss = 0.0;
};

struct RunTrace {
    std::vector<Checkpoint> checkpoints;  // >= 100 per run (cadence steps/100)
    double final_loss = 0.0;              // training objective at the last step
    double wall_time_s = 0.0;
    uint64_t seed = 0;
    int steps_run = 0;
    bool diverged = false;
    std::string abort_reason;
};

// Fraction of consecutive checkpoint pairs with non-increasing loss.
double fraction_nonincreasing(const RunTrace& trace);

// Full-batch loop: `loss_fn` rebuilds the graph (forward + loss) each step and
// must depend on `params`. Divergence (loss > 1e6 or non-finite) aborts with
// the partial trace flagged. Deterministic given (params init, cfg).
RunTrace train_run(const std::function<ad::Var()>& loss_fn, std::vector<ad::Var> params,
                   const TrainConfig& cfg);

}  // namespace grkan
