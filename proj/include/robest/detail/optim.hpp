#pragma once

#include <functional>

#include "robest/types.hpp"

namespace robest::detail {

struct NelderMeadConfig {
    int max_iter = 2000;
    double x_tol = 1e-10;
    double f_tol = 1e-14;
};

struct NelderMeadResult {
    Vector x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             const NelderMeadConfig& config = {});

}  // namespace robest::detail
