#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace netfex {

/// Returns f(x). When `grad` is non-empty it receives the gradient.
/// May throw NumericError for points outside the finite domain.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam() = default;
    explicit Adam(std::size_t n, AdamOptions opts = {});

    /// x -= lr * m_hat / (sqrt(v_hat) + eps)
    void step(std::span<double> x, std::span<const double> grad, double lr);

    std::size_t size() const noexcept { return m_.size(); }
    std::size_t steps() const noexcept { return t_; }

    nlohmann::json to_json() const;
    static Adam from_json(const nlohmann::json& j);

private:
    AdamOptions opts_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;
};

/// lr(t) = lr_min + (lr0 - lr_min) * (1 + cos(pi t / T)) / 2
double cosine_lr(double lr0, double lr_min, std::size_t t, std::size_t total);

struct BfgsOptions {
    std::size_t max_iter = 20;
    double step = 1.0;
    double grad_tol = 1e-10;      // stop when ||g||_inf falls below
    double curvature_tol = 1e-12; // reset H when y's is not above
    bool scale_initial = true;    // H0 = (y's / y'y) I on the first update
    bool monotone = true;         // reject finite steps that raise f
    bool l1_first_step = true;    // scale steps taken from the identity by min(1, 1/||g||_1)
};

struct BfgsResult {
    std::vector<double> x;
    double value = 0.0;
    std::size_t iterations = 0;
    std::size_t accepted = 0;
    std::size_t rejected_non_finite = 0;
    bool converged = false;
    std::vector<double> accepted_values; // f after each accepted step
};

/// Quasi-Newton with a fixed unit step and an inverse-Hessian estimate.
/// A trial that raises f or is non-finite is rolled back; a non-increasing
/// trial is accepted. Throws NumericError if f(x0) itself is not finite.
BfgsResult bfgs_minimize(const Objective& f, std::vector<double> x0, const BfgsOptions& opts = {});

} // namespace netfex
