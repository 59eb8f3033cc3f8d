#pragma once

#include <qaf/diffcore/ops.hpp>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace qaf {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t entries = 0;
    std::string worst; // "<param index>[<flat index>] analytic=.. numeric=.."
    bool passed = true;
};

/// |a - n| / max(1e-8, |a| + |n|)
inline double grad_rel_error(double analytic, double numeric)
{
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences for every entry of every parameter. The step for entry x is
/// h * (|x| + 1). `f` must rebuild its graph from the current parameter
/// values on every call.
inline GradCheckReport grad_check(const std::function<Var()>& f, const std::vector<Var>& params, double h,
                                  double tol)
{
    if (!(h > 0.0)) throw Error("grad_check: step must be positive");
    for (const auto& p : params) p->zero_grad();
    Var root = f();
    backward(root);
    root.reset();

    std::vector<Array> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p->has_grad ? p->grad : Array::zeros_like(p->value));

    auto eval = [&f]() {
        const double v = f()->value.item();
        if (!std::isfinite(v)) throw NonFiniteError("grad_check: non-finite objective at perturbed point");
        return v;
    };

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& value = params[pi]->value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double x0 = value[i];
            const double step = h * (std::abs(x0) + 1.0);
            value[i] = x0 + step;
            const double fp = eval();
            value[i] = x0 - step;
            const double fm = eval();
            value[i] = x0;
            const double numeric = (fp - fm) / (2.0 * step);
            const double err = grad_rel_error(analytic[pi][i], numeric);
            ++report.entries;
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst = std::to_string(pi) + "[" + std::to_string(i) + "] analytic=" +
                               std::to_string(analytic[pi][i]) + " numeric=" + std::to_string(numeric);
            }
        }
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

/// Convenience form over plain arrays: each array becomes a parameter leaf.
inline GradCheckReport grad_check_at(const std::function<Var(const std::vector<Var>&)>& f,
                                     const std::vector<Array>& point, double h, double tol)
{
    std::vector<Var> params;
    for (const auto& a : point) params.push_back(parameter(a));
    return grad_check([&] { return f(params); }, params, h, tol);
}

} // namespace qaf
