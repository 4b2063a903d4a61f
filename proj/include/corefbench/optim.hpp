#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "corefbench/tensor.hpp"

namespace corefbench {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay: the decay is applied directly to the
/// parameter, not through the gradient. Moment buffers are bias-corrected.
class AdamW {
public:
    AdamW(std::vector<TensorPtr> params, AdamWConfig config = {});

    /// One in-place update using each parameter's current grad buffer. A
    /// missing grad buffer counts as an all-zero gradient.
    void step(double lr);

    void zero_grad();

    std::size_t step_count() const { return step_count_; }
    const AdamWConfig& config() const { return config_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }

private:
    std::vector<TensorPtr> params_;
    AdamWConfig config_;
    std::size_t step_count_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

/// Linear warmup from 0 to base_lr over the first ceil(0.10 * total) steps,
/// then linear decay back to 0 at total_steps.
struct LrSchedule {
    double base_lr = 0.0;
    std::size_t total_steps = 0;
    std::size_t warmup_steps = 0;

    static LrSchedule linear_warmup_decay(double base_lr, std::size_t total_steps);

    double lr_at(std::size_t step) const;  // throws std::out_of_range past total_steps
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_coord = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t coords_checked = 0;
};

/// Central-difference check of analytic gradients: perturbs every coordinate
/// of every parameter by +/- eps, reruns `forward`, and compares
/// (f+ - f-) / (2 eps) against the supplied analytic gradient. The relative
/// error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport finite_diff_check_against(const std::function<double()>& forward,
                                          const std::vector<TensorPtr>& params,
                                          const std::vector<std::vector<double>>& analytic,
                                          double eps);

/// Convenience wrapper: builds the loss once with gradients enabled to obtain
/// analytic gradients, then runs the central-difference comparison with
/// gradients disabled.
GradCheckReport finite_diff_check(const std::function<TensorPtr()>& make_loss,
                                  const std::vector<TensorPtr>& params, double eps);

}  // namespace corefbench
