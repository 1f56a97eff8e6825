#include "psg/optimizer.hpp"

#include "psg/errors.hpp"

#include <cmath>

namespace psg {

void AdamW::step(ParamStore& params, double lr, double weight_decay) {
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_.emplace_back(params[i].value.shape());
            v_.emplace_back(params[i].value.shape());
        }
    }
    if (m_.size() != params.size()) {
        throw TrainingError("AdamW: optimizer state does not match the parameter store");
    }
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    const double bc1 = 1.0 - std::pow(beta1_, t);
    const double bc2 = 1.0 - std::pow(beta2_, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        Array& m = m_[i];
        Array& v = v_[i];
        for (std::size_t e = 0; e < p.value.numel(); ++e) {
            const double g = p.grad[e];
            m[e] = beta1_ * m[e] + (1.0 - beta1_) * g;
            v[e] = beta2_ * v[e] + (1.0 - beta2_) * g * g;
            const double m_hat = m[e] / bc1;
            const double v_hat = v[e] / bc2;
            p.value[e] -= lr * weight_decay * p.value[e];
            p.value[e] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

} // namespace psg
