// clevercatch/grad_check.hpp
// Central finite-difference check of an analytic gradient.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "clevercatch/rng.hpp"

namespace clevercatch {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    bool pass = true;
};

struct GradCheckOptions {
    double tolerance = 1e-5;
    double step = 1e-6;
    // Relative error is |a - n| / max(|a|, |n|, floor * max(1, |f|)), with f
    // the loss at the unperturbed point. Scaling the floor with the loss keeps
    // the verdict unchanged when the loss is multiplied by a constant.
    double floor = 1e-4;
    std::size_t full_check_limit = 10000;
    std::size_t sampled_coordinates = 256;
    std::uint64_t sample_seed = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

// `loss` evaluates the objective at the point held in `point` (which it may
// read through any alias). `point` is perturbed in place and restored.
inline GradCheckReport grad_check(const std::function<double()>& loss, std::span<double> point,
                                  std::span<const double> analytic, const GradCheckOptions& opt = {}) {
    GradCheckReport report;
    const double floor = opt.floor * std::max(1.0, std::abs(loss()));
    std::vector<std::size_t> coords(point.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (point.size() > opt.full_check_limit) {
        Rng rng(opt.sample_seed);
        rng.shuffle(coords);
        coords.resize(std::max<std::size_t>(opt.sampled_coordinates, 100));
        std::sort(coords.begin(), coords.end());
    }
    for (std::size_t k : coords) {
        const double original = point[k];
        point[k] = original + opt.step;
        const double up = loss();
        point[k] = original - opt.step;
        const double down = loss();
        point[k] = original;
        const double numeric = (up - down) / (2.0 * opt.step);
        const double err = relative_error(analytic[k], numeric, floor);
        ++report.checked;
        if (!std::isfinite(err)) {
            report.max_rel_err = std::numeric_limits<double>::infinity();
            report.worst_index = k;
            break;
        }
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst_index = k;
        }
    }
    report.pass = report.max_rel_err < opt.tolerance;
    return report;
}

}  // namespace clevercatch
