#include "netfex/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "netfex/error.hpp"

namespace netfex {

Adam::Adam(std::size_t n, AdamOptions opts) : opts_(opts), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> x, std::span<const double> grad, double lr)
{
    if (x.size() != m_.size() || grad.size() != m_.size()) throw ParameterError("Adam size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
        m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grad[i];
        v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grad[i] * grad[i];
        x[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + opts_.eps);
    }
}

nlohmann::json Adam::to_json() const
{
    return {{"beta1", opts_.beta1}, {"beta2", opts_.beta2}, {"eps", opts_.eps}, {"t", t_}, {"m", m_}, {"v", v_}};
}

Adam Adam::from_json(const nlohmann::json& j)
{
    Adam a;
    a.opts_ = {j.at("beta1").get<double>(), j.at("beta2").get<double>(), j.at("eps").get<double>()};
    a.t_ = j.at("t").get<std::size_t>();
    a.m_ = j.at("m").get<std::vector<double>>();
    a.v_ = j.at("v").get<std::vector<double>>();
    if (a.m_.size() != a.v_.size()) throw ParameterError("Adam state size mismatch");
    return a;
}

double cosine_lr(double lr0, double lr_min, std::size_t t, std::size_t total)
{
    if (total == 0) return lr0;
    double frac = static_cast<double>(std::min(t, total)) / static_cast<double>(total);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

bool finite_all(const Eigen::VectorXd& v)
{
    return v.allFinite();
}

// f and grad at x; false when the objective reports a non-finite point
bool probe(const Objective& f, const Eigen::VectorXd& x, double& value, Eigen::VectorXd& grad)
{
    try {
        value = f({x.data(), static_cast<std::size_t>(x.size())}, {grad.data(), static_cast<std::size_t>(grad.size())});
    } catch (const NumericError&) {
        return false;
    }
    return std::isfinite(value) && finite_all(grad);
}

} // namespace

BfgsResult bfgs_minimize(const Objective& f, std::vector<double> x0, const BfgsOptions& opts)
{
    const auto n = static_cast<Eigen::Index>(x0.size());
    Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(x0.data(), n);
    Eigen::VectorXd g(n);
    double fx = 0.0;
    if (!probe(f, x, fx, g)) throw NumericError("objective is not finite at the starting point");

    BfgsResult res;
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    bool fresh = true; // H is the identity and has not been rescaled
    Eigen::VectorXd x_new(n), g_new(n);

    for (; res.iterations < opts.max_iter; ++res.iterations) {
        if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd p = -(H * g);
        double t = opts.step;
        if (fresh && opts.l1_first_step) t *= std::min(1.0, 1.0 / g.lpNorm<1>());
        x_new = x + t * p;
        double f_new = 0.0;
        if (!finite_all(x_new) || !probe(f, x_new, f_new, g_new)) {
            ++res.rejected_non_finite;
            if (fresh) break; // a gradient step from the identity already failed
            H.setIdentity();
            fresh = true;
            continue;
        }

        Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd y = g_new - g;
        double ys = y.dot(s);
        if (ys > opts.curvature_tol) {
            if (fresh && opts.scale_initial) H *= ys / y.squaredNorm();
            double rho = 1.0 / ys;
            Eigen::VectorXd Hy = H * y;
            double yHy = y.dot(Hy);
            // H+ = (I - rho s y') H (I - rho y s') + rho s s'
            H += (rho * rho * yHy + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
            H = 0.5 * (H + H.transpose()).eval();
            fresh = false;
        } else {
            H.setIdentity();
            fresh = true;
        }

        if (!opts.monotone || f_new <= fx) {
            x = x_new;
            g = g_new;
            fx = f_new;
            ++res.accepted;
            res.accepted_values.push_back(fx);
        }
    }
    if (!res.converged && g.lpNorm<Eigen::Infinity>() < opts.grad_tol) res.converged = true;
    res.x.assign(x.data(), x.data() + n);
    res.value = fx;
    return res;
}

} // namespace netfex
