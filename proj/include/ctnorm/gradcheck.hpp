#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ctnorm/tensor.hpp"

namespace ctnorm::nn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::int64_t worst_index = -1;
    std::vector<std::int64_t> excluded;  // coordinates sitting on activation kinks
    std::int64_t checked = 0;
};

// Central-difference check of d f / d point against point.grad(), evaluated
// coordinate by coordinate. Relative error is |analytic - numeric| divided by
// max(1, |analytic|). Coordinates where the second difference is first-order
// in epsilon (a kink crossed the stencil) are excluded rather than failed.
//
// f must evaluate the scalar loss from the current contents of `point` and
// must not retain state between calls. Use T = double.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& f, Tensor<T>& point, double epsilon,
                           double kink_tol = 0.05) {
    if (epsilon <= 0.0) throw ValueError("grad_check: epsilon must be > 0");
    point.set_requires_grad(true);
    point.clear_grad();

    Tensor<T> loss = f();
    backward(loss);
    if (!point.has_grad()) throw ValueError("grad_check: point did not receive a gradient");
    std::vector<T> analytic = point.grad();
    const double f0 = static_cast<double>(loss.item());

    GradCheckReport report;
    auto& x = point.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T keep = x[i];
        double fp, fm;
        {
            NoGradGuard ng;
            x[i] = keep + static_cast<T>(epsilon);
            fp = static_cast<double>(f().item());
            x[i] = keep - static_cast<T>(epsilon);
            fm = static_cast<double>(f().item());
            x[i] = keep;
        }
        const double a = static_cast<double>(analytic[i]);
        const double second = std::abs(fp + fm - 2.0 * f0);
        if (second > kink_tol * epsilon * std::max(1.0, std::abs(a))) {
            report.excluded.push_back(static_cast<std::int64_t>(i));
            continue;
        }
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        ++report.checked;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = static_cast<std::int64_t>(i);
        }
    }
    return report;
}

}  // namespace ctnorm::nn
