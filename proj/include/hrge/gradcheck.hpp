#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hrge/matrix.hpp"
#include "hrge/model.hpp"
#include "hrge/trainer.hpp"

namespace hrge {

struct GradCheckOptions {
    double step = 1e-5;       // central-difference step
    double tolerance = 1e-4;  // max relative error
    // Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
    // Called on the analytic gradients before comparison (negative controls).
    std::function<void(const ParamList&)> corrupt;
};

struct BlockError {
    std::string name;
    std::size_t count = 0;
    double max_rel = 0.0;
    double max_abs = 0.0;
};

struct GradCheckReport {
    std::vector<BlockError> blocks;
    double worst = 0.0;
    bool passed = false;
    double tolerance = 0.0;
};

double relative_error(double analytic, double numeric, double floor);

// Compares analytic gradients of the mean cross-entropy over the batch against
// central finite differences for every scalar parameter of model and head.
GradCheckReport gradient_check(HrgeModel& model, Classifier& clf, std::span<const Matrix* const> views,
                               std::span<const std::size_t> labels, const GradCheckOptions& opts = {});

std::string format_gradcheck_report(const GradCheckReport& r);

} // namespace hrge
