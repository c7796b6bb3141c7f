#include "hrge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hrge {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradient_check(HrgeModel& model, Classifier& clf, std::span<const Matrix* const> views,
                               std::span<const std::size_t> labels, const GradCheckOptions& opts) {
    ParamList params = model.params();
    const ParamList head = clf.params();
    params.insert(params.end(), head.begin(), head.end());

    zero_grads(params);
    forward_backward(model, clf, views, labels, true);
    if (opts.corrupt) opts.corrupt(params);
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.emplace_back(p.grad.begin(), p.grad.end());

    auto loss = [&] { return forward_backward(model, clf, views, labels, false).loss; };

    GradCheckReport report;
    report.tolerance = opts.tolerance;
    for (std::size_t k = 0; k < params.size(); ++k) {
        BlockError be{params[k].name, params[k].value.size(), 0.0, 0.0};
        for (std::size_t i = 0; i < params[k].value.size(); ++i) {
            double& v = params[k].value[i];
            const double saved = v;
            v = saved + opts.step;
            const double up = loss();
            v = saved - opts.step;
            const double down = loss();
            v = saved;
            const double numeric = (up - down) / (2.0 * opts.step);
            be.max_abs = std::max(be.max_abs, std::abs(analytic[k][i] - numeric));
            be.max_rel = std::max(be.max_rel, relative_error(analytic[k][i], numeric, opts.floor));
        }
        report.worst = std::max(report.worst, be.max_rel);
        report.blocks.push_back(std::move(be));
    }
    report.passed = report.worst < opts.tolerance;
    return report;
}

std::string format_gradcheck_report(const GradCheckReport& r) {
    std::ostringstream out;
    char line[256];
    for (const auto& b : r.blocks) {
        std::snprintf(line, sizeof line, "%-32s n=%-6zu max_rel=%.3e max_abs=%.3e %s\n", b.name.c_str(), b.count,
                      b.max_rel, b.max_abs, b.max_rel < r.tolerance ? "ok" : "FAIL");
        out << line;
    }
    std::snprintf(line, sizeof line, "worst=%.3e tolerance=%.1e result=%s\n", r.worst, r.tolerance,
                  r.passed ? "PASS" : "FAIL");
    out << line;
    return out.str();
}

} // namespace hrge
