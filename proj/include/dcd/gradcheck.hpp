#pragma once

#include <string>
#include <vector>

namespace dcd {

struct GradCheckResult {
    std::string name;
    double worst_rel_err = 0.0;  // elements below 1e-8 compared absolutely
    bool pass = false;
};

/// Analytic-vs-central-difference checks for every loss (w.r.t. student
/// logits) and for the end-to-end task/objective graphs (w.r.t. student
/// parameters), over `instances` random cases each. Pass threshold 1e-4.
/// `corrupt` perturbs the named check's analytic gradient (test hook).
std::vector<GradCheckResult> run_gradient_checks(size_t instances = 20, double step = 1e-5,
                                                 const std::string& corrupt = "");

/// True when every result passes.
bool all_pass(const std::vector<GradCheckResult>& results);

}  // namespace dcd
