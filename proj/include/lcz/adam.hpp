#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lcz/common.hpp"

namespace lcz {

enum class DecayMode { lr_decay, weight_decay };

struct AdamConfig {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    DecayMode mode = DecayMode::lr_decay;
    double lr_decay = 0.004;      // eta_t = lr / (1 + lr_decay * t)
    double weight_decay = 0.0;    // L2 term added to the gradient in weight_decay mode

    void validate() const {
        require(lr > 0.0, ErrorKind::invalid_argument, "adam lr must be positive");
        require(beta1 >= 0.0 && beta1 < 1.0, ErrorKind::invalid_argument, "adam beta1 must be in [0, 1)");
        require(beta2 >= 0.0 && beta2 < 1.0, ErrorKind::invalid_argument, "adam beta2 must be in [0, 1)");
        require(eps > 0.0, ErrorKind::invalid_argument, "adam eps must be positive");
        require(lr_decay >= 0.0, ErrorKind::invalid_argument, "adam lr_decay must be non-negative");
        require(weight_decay >= 0.0, ErrorKind::invalid_argument, "adam weight_decay must be non-negative");
    }
};

/// First/second moment state for a fixed list of parameter arrays. The step
/// counter t advances once per call, i.e. once per optimizer step.
template <typename T>
struct AdamState {
    std::int64_t t = 0;
    std::vector<std::vector<double>> m, v;

    void init(const std::vector<std::vector<T>*>& params) {
        t = 0;
        m.clear();
        v.clear();
        m.reserve(params.size());
        v.reserve(params.size());
        for (const auto* p : params) {
            m.emplace_back(p->size(), 0.0);
            v.emplace_back(p->size(), 0.0);
        }
    }

    void step(const AdamConfig& cfg, const std::vector<std::vector<T>*>& params,
              const std::vector<const std::vector<T>*>& grads) {
        require(params.size() == m.size() && grads.size() == m.size(), ErrorKind::dimension,
                "adam state does not match parameter list");
        ++t;
        const double lr_t =
            cfg.mode == DecayMode::lr_decay ? cfg.lr / (1.0 + cfg.lr_decay * static_cast<double>(t)) : cfg.lr;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::vector<T>& p = *params[i];
            const std::vector<T>& gr = *grads[i];
            require(p.size() == m[i].size() && gr.size() == m[i].size(), ErrorKind::dimension,
                    "adam parameter array size changed");
            std::vector<double>& mi = m[i];
            std::vector<double>& vi = v[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                double g = static_cast<double>(gr[j]);
                if (cfg.mode == DecayMode::weight_decay) g += cfg.weight_decay * static_cast<double>(p[j]);
                mi[j] = cfg.beta1 * mi[j] + (1.0 - cfg.beta1) * g;
                vi[j] = cfg.beta2 * vi[j] + (1.0 - cfg.beta2) * g * g;
                const double mhat = mi[j] / bc1;
                const double vhat = vi[j] / bc2;
                p[j] = static_cast<T>(static_cast<double>(p[j]) - lr_t * mhat / (std::sqrt(vhat) + cfg.eps));
            }
        }
    }
};

} // namespace lcz
