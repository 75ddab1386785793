#pragma once

#include <vector>

#include "ctnorm/tensor.hpp"

namespace ctnorm::nn {

// SGD with classical momentum: v <- momentum*v + grad; p <- p - lr*v.
template <typename T>
class SgdMomentum {
public:
    SgdMomentum(std::vector<Tensor<T>> params, double lr, double momentum)
        : params_(std::move(params)), lr_(static_cast<T>(lr)), momentum_(static_cast<T>(momentum)) {
        if (lr <= 0.0) throw ValueError("sgd: learning rate must be > 0");
        if (momentum < 0.0 || momentum >= 1.0) throw ValueError("sgd: momentum must lie in [0,1)");
        velocity_.reserve(params_.size());
        for (const auto& p : params_) velocity_.emplace_back(p.size(), T(0));
    }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (!p.has_grad()) {
                throw ValueError("sgd: parameter " + std::to_string(i) + " has no gradient");
            }
            const auto& g = p.grad();
            auto& v = velocity_[i];
            auto& d = p.data();
            for (std::size_t j = 0; j < d.size(); ++j) {
                v[j] = momentum_ * v[j] + g[j];
                d[j] -= lr_ * v[j];
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void reset_velocity() {
        for (auto& v : velocity_) std::fill(v.begin(), v.end(), T(0));
    }

    const std::vector<Tensor<T>>& params() const { return params_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> velocity_;
    T lr_;
    T momentum_;
};

}  // namespace ctnorm::nn
