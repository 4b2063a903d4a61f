#include "corefbench/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace corefbench {

AdamW::AdamW(std::vector<TensorPtr> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void AdamW::step(double lr) {
    ++step_count_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        if (!p.grad.empty() && p.grad.size() != p.values.size()) {
            throw ShapeError("adamw_step: grad size " + std::to_string(p.grad.size()) +
                             " does not match parameter " + shape_str(p.shape));
        }
        const bool has_grad = !p.grad.empty();
        for (std::size_t j = 0; j < p.values.size(); ++j) {
            const double g = has_grad ? p.grad[j] : 0.0;
            if (config_.weight_decay != 0.0) {
                p.values[j] *= 1.0 - lr * config_.weight_decay;
            }
            m_[i][j] = b1 * m_[i][j] + (1.0 - b1) * g;
            v_[i][j] = b2 * v_[i][j] + (1.0 - b2) * g * g;
            const double m_hat = m_[i][j] / bc1;
            const double v_hat = v_[i][j] / bc2;
            p.values[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

void AdamW::zero_grad() {
    for (const auto& p : params_) p->zero_grad();
}

LrSchedule LrSchedule::linear_warmup_decay(double base_lr, std::size_t total_steps) {
    if (base_lr <= 0.0) throw std::invalid_argument("lr schedule: base_lr must be > 0");
    if (total_steps == 0) throw std::invalid_argument("lr schedule: total_steps must be >= 1");
    LrSchedule s;
    s.base_lr = base_lr;
    s.total_steps = total_steps;
    s.warmup_steps = (total_steps + 9) / 10;  // ceil(0.10 * total)
    return s;
}

double LrSchedule::lr_at(std::size_t step) const {
    if (step > total_steps) {
        throw std::out_of_range("lr_at: step " + std::to_string(step) + " past total " +
                                std::to_string(total_steps));
    }
    if (step <= warmup_steps) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    return base_lr * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup_steps);
}

GradCheckReport finite_diff_check_against(const std::function<double()>& forward,
                                          const std::vector<TensorPtr>& params,
                                          const std::vector<std::vector<double>>& analytic,
                                          double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_check: eps must be > 0");
    if (analytic.size() != params.size()) {
        throw std::invalid_argument("finite_diff_check: " + std::to_string(analytic.size()) +
                                    " gradient buffers for " + std::to_string(params.size()) +
                                    " parameters");
    }
    GradCheckReport report;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (analytic[i].size() != p.size()) {
            throw ShapeError("finite_diff_check: gradient buffer size " +
                             std::to_string(analytic[i].size()) + " vs parameter " +
                             shape_str(p.shape));
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double saved = p.values[j];
            p.values[j] = saved + eps;
            const double f_plus = forward();
            p.values[j] = saved - eps;
            const double f_minus = forward();
            p.values[j] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
                throw std::runtime_error("finite_diff_check: non-finite function value at param " +
                                         std::to_string(i) + " coord " + std::to_string(j));
            }
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double a = analytic[i][j];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = i;
                report.worst_coord = j;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

GradCheckReport finite_diff_check(const std::function<TensorPtr()>& make_loss,
                                  const std::vector<TensorPtr>& params, double eps) {
    for (const auto& p : params) p->zero_grad();
    auto loss = make_loss();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        if (p->grad.empty()) {
            analytic.emplace_back(p->size(), 0.0);
        } else {
            analytic.push_back(p->grad);
        }
    }
    auto forward = [&make_loss]() { return make_loss()->scalar(); };
    return finite_diff_check_against(forward, params, analytic, eps);
}

}  // namespace corefbench
