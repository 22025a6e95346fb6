#pragma once

#include <vector>

#include "omniclip/config.hpp"
#include "omniclip/ops.hpp"
#include "omniclip/params.hpp"

namespace omniclip {

// Temperature-scaled similarity head. With trainable_temperature the inverse
// temperature is a rank-0 parameter; otherwise logits are sims / temperature.
struct SimilarityHead {
    double temperature = 0.07;
    double label_smoothing = 0.1;
    Var inv_tau; // defined only when trainable

    SimilarityHead() = default;
    SimilarityHead(const ModelConfig& cfg);
    Var apply_temperature(const Var& sims) const;
    void collect(ParamList& out) const;
};

// out[i][j] = cos(fv[i], ft[j]); rows must be nonzero.
Var similarity_matrix(const Var& fv, const Var& ft);

// Mean over the batch of cross-entropy between smoothed one-hot targets and
// softmax(sims / tau). Targets put 1-eps on the label, eps/(C-1) elsewhere.
Var classification_loss(const Var& sims, const std::vector<std::size_t>& labels, const SimilarityHead& head);

// Fraction of rows whose label lands in the k largest similarities; ties
// resolved toward the lowest class index.
double top_k_accuracy(const Tensor& sims, const std::vector<std::size_t>& labels, std::size_t k);

std::vector<double> per_class_accuracy(const Tensor& sims, const std::vector<std::size_t>& labels,
                                       std::size_t num_classes);

} // namespace omniclip
