#pragma once

#include <vector>

#include "mvod/autoencoder.hpp"
#include "mvod/dataset.hpp"
#include "mvod/imputation.hpp"
#include "mvod/losses.hpp"

namespace mvod {

struct TermFlags {
    bool ar = true;
    bool oa = true;
    bool na = true;
    bool koleo = true;
    bool rank = true;
};

// Everything a training step depends on besides the parameters. All
// selections (neighbors, bank contents, rank picks, participant sets) are
// frozen here, so evaluating twice with the same spec and parameters gives
// identical results and central differences of the value match the analytic
// gradients.
struct BatchSpec {
    std::vector<std::size_t> anchors;    // batch instance ids, in batch order

    std::vector<std::size_t> oa_anchors; // latents available in every view
    std::vector<std::size_t> na_anchors; // neighbor lists in every view
    std::vector<std::vector<std::size_t>> koleo_rows; // per view
    std::vector<RankChoices> rank_choices;            // per view, absolute ids

    const std::vector<NeighborIndex>* index = nullptr; // per view, for na
    const LatentViews* constants = nullptr; // imputed latents read as constants
    const MemoryBank* bank = nullptr;

    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double mu = 0.0;
    double tau = 0.5;    // contrastive temperature
    double na_tau = 1.0; // 1 reproduces the temperature-free alignment form
    RankSign rank_sign = RankSign::Printed;
    TermFlags flags;
};

// Weighted total objective on one batch. When grads is given, analytic
// gradients for every parameter are accumulated into it (it is zeroed first).
// Gradients flow through encoded latents only; latents taken from `constants`
// and bank entries are fixed. Non-finite term values or gradients raise
// NumericError naming the term.
LossBreakdown objective_eval(const AutoencoderStack& stack, const MultiViewDataset& data,
                             const BatchSpec& spec, GradientSet* grads);

} // namespace mvod
