#include "netfex/controller.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "netfex/error.hpp"

namespace netfex {

double SampledSequence::log_prob() const
{
    return std::accumulate(log_probs.begin(), log_probs.end(), 0.0);
}

Controller::Controller(const TreeTemplate& tree, OperatorSet ops, std::uint64_t seed, ControllerOptions opts)
    : opts_(opts)
{
    ops.validate();
    if (opts_.input_dim == 0 || opts_.hidden == 0) throw ParameterError("controller layer sizes must be >= 1");
    for (std::size_t i = 0; i < tree.size(); ++i) {
        std::size_t k = tree.node(i).kind == NodeKind::binary ? ops.binary.size() : ops.unary.size();
        slice_begin_.push_back(output_size_);
        slice_size_.push_back(k);
        output_size_ += k;
    }
    const std::size_t in = opts_.input_dim, h = opts_.hidden, out = output_size_;
    weights_.resize(h * in + h + out * h + out);
    Rng rng(seed);
    const double b1 = 1.0 / std::sqrt(static_cast<double>(in));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(h));
    std::size_t q = 0;
    for (; q < h * in + h; ++q) weights_[q] = uniform(rng, -b1, b1);
    for (; q < weights_.size(); ++q) weights_[q] = uniform(rng, -b2, b2);
    adam_ = Adam(weights_.size());
}

void Controller::set_weights(std::span<const double> w)
{
    if (w.size() != weights_.size()) throw ParameterError("controller weight count mismatch");
    std::copy(w.begin(), w.end(), weights_.begin());
}

std::vector<double> Controller::hidden() const
{
    const std::size_t in = opts_.input_dim, h = opts_.hidden;
    const double* W1 = weights_.data();
    const double* b1 = W1 + h * in;
    std::vector<double> a(h);
    for (std::size_t r = 0; r < h; ++r) {
        double s = b1[r];
        for (std::size_t c = 0; c < in; ++c) s += W1[r * in + c];
        a[r] = std::tanh(s);
    }
    return a;
}

std::vector<double> Controller::logits(const std::vector<double>& a) const
{
    const std::size_t in = opts_.input_dim, h = opts_.hidden, out = output_size_;
    const double* W2 = weights_.data() + h * in + h;
    const double* b2 = W2 + out * h;
    std::vector<double> z(out);
    for (std::size_t r = 0; r < out; ++r) {
        double s = b2[r];
        for (std::size_t c = 0; c < h; ++c) s += W2[r * h + c] * a[c];
        z[r] = s;
    }
    return z;
}

std::vector<std::vector<double>> Controller::forward() const
{
    auto z = logits(hidden());
    std::vector<std::vector<double>> pmfs(slice_size_.size());
    for (std::size_t n = 0; n < slice_size_.size(); ++n) {
        const double* s = z.data() + slice_begin_[n];
        const std::size_t k = slice_size_[n];
        double mx = *std::max_element(s, s + k);
        auto& p = pmfs[n];
        p.resize(k);
        double total = 0.0;
        for (std::size_t a = 0; a < k; ++a) total += p[a] = std::exp(s[a] - mx);
        for (auto& v : p) v /= total;
    }
    return pmfs;
}

SampledSequence Controller::sample(double epsilon, Rng& rng) const
{
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("epsilon must be in [0, 1]");
    auto pmfs = forward();
    SampledSequence out;
    for (const auto& p : pmfs) {
        const std::size_t k = p.size();
        std::size_t choice = 0;
        bool explore = uniform01(rng) < epsilon;
        double u = uniform01(rng);
        if (explore) {
            choice = std::min(static_cast<std::size_t>(u * static_cast<double>(k)), k - 1);
        } else {
            double acc = 0.0;
            choice = k - 1;
            for (std::size_t a = 0; a < k; ++a) {
                acc += p[a];
                if (u < acc) {
                    choice = a;
                    break;
                }
            }
            // guard against rounding in the cumulative sum landing on a zero-mass tail
            while (choice > 0 && p[choice] == 0.0) --choice;
        }
        out.sequence.push_back(static_cast<std::uint16_t>(choice));
        out.log_probs.push_back(std::log(p[choice]));
        out.explored.push_back(explore ? 1 : 0);
    }
    return out;
}

double Controller::log_prob(const OperatorSequence& seq) const
{
    auto pmfs = forward();
    if (seq.size() != pmfs.size()) throw ParameterError("sequence length does not match controller layout");
    double s = 0.0;
    for (std::size_t n = 0; n < seq.size(); ++n) {
        if (seq[n] >= pmfs[n].size()) throw ParameterError("operator index out of range");
        s += std::log(pmfs[n][seq[n]]);
    }
    return s;
}

bool Controller::policy_update(std::span<const SampledSequence> batch, std::span<const double> scores, double nu)
{
    if (batch.empty()) throw ParameterError("policy update needs at least one sample");
    if (batch.size() != scores.size()) throw ParameterError("score count does not match batch");
    const double threshold = quantile_threshold(scores, nu);

    const std::size_t in = opts_.input_dim, h = opts_.hidden, out = output_size_;
    auto a = hidden();
    auto pmfs = forward();
    // d objective / d logits
    std::vector<double> gz(out, 0.0);
    bool any = false;
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    for (std::size_t m = 0; m < batch.size(); ++m) {
        if (!(scores[m] >= threshold)) continue;
        const double adv = scores[m] - threshold;
        if (adv == 0.0) continue;
        any = true;
        const auto& seq = batch[m].sequence;
        if (seq.size() != slice_size_.size()) throw ParameterError("sequence length does not match controller layout");
        for (std::size_t n = 0; n < seq.size(); ++n) {
            double* g = gz.data() + slice_begin_[n];
            for (std::size_t c = 0; c < slice_size_[n]; ++c) {
                g[c] += adv * inv_m * ((c == seq[n] ? 1.0 : 0.0) - pmfs[n][c]);
            }
        }
    }
    if (!any) return false;

    // gradient of the negated objective, since Adam descends
    std::vector<double> grad(weights_.size(), 0.0);
    double* gW1 = grad.data();
    double* gb1 = gW1 + h * in;
    double* gW2 = gb1 + h;
    double* gb2 = gW2 + out * h;
    const double* W2 = weights_.data() + h * in + h;
    std::vector<double> ga(h, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
        gb2[r] = -gz[r];
        for (std::size_t c = 0; c < h; ++c) {
            gW2[r * h + c] = -gz[r] * a[c];
            ga[c] += -gz[r] * W2[r * h + c];
        }
    }
    for (std::size_t r = 0; r < h; ++r) {
        const double gpre = ga[r] * (1.0 - a[r] * a[r]);
        gb1[r] = gpre;
        for (std::size_t c = 0; c < in; ++c) gW1[r * in + c] = gpre;
    }
    adam_.step(weights_, grad, opts_.lr);
    return true;
}

nlohmann::json Controller::to_json() const
{
    return {{"input_dim", opts_.input_dim},
            {"hidden", opts_.hidden},
            {"output_size", output_size_},
            {"lr", opts_.lr},
            {"weights", weights_},
            {"adam", adam_.to_json()}};
}

void Controller::load_json(const nlohmann::json& j)
{
    try {
        if (j.at("input_dim").get<std::size_t>() != opts_.input_dim || j.at("hidden").get<std::size_t>() != opts_.hidden ||
            j.at("output_size").get<std::size_t>() != output_size_) {
            throw ParameterError("controller checkpoint layout does not match");
        }
        set_weights(j.at("weights").get<std::vector<double>>());
        opts_.lr = j.at("lr").get<double>();
        adam_ = Adam::from_json(j.at("adam"));
        if (adam_.size() != weights_.size()) throw ParameterError("controller optimizer state size mismatch");
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("malformed controller checkpoint: ") + e.what());
    }
}

double quantile_threshold(std::span<const double> scores, double nu)
{
    if (scores.empty()) throw ParameterError("quantile of an empty score list");
    if (!(nu > 0.0 && nu <= 1.0)) throw ParameterError("nu must be in (0, 1]");
    std::vector<double> s(scores.begin(), scores.end());
    std::sort(s.begin(), s.end());
    const double pos = (1.0 - nu) * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
}

} // namespace netfex
