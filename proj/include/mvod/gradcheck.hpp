#pragma once

#include <string>
#include <vector>

namespace mvod {

struct GradCheckCase {
    std::string term;
    std::size_t seed = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    bool all_pass = true;
};

// Central-difference verification of the analytic gradients on a small
// two-view stack (hidden 5, latent 3, batch 6) with a non-empty bank: each
// loss term in isolation, the rank term in both sign modes, and the weighted
// total. step is the half-width h; relative errors are measured against
// max(|analytic|, |numeric|, 0.001).
GradCheckReport run_gradient_checks(std::size_t n_seeds, double step, double tolerance);

} // namespace mvod
