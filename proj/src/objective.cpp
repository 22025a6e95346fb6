#include "omniclip/objective.hpp"

#include <algorithm>
#include <numeric>

namespace omniclip {

SimilarityHead::SimilarityHead(const ModelConfig& cfg)
    : temperature(cfg.temperature), label_smoothing(cfg.label_smoothing) {
    if (cfg.trainable_temperature)
        inv_tau = Var::leaf(Tensor::scalar(1.0 / cfg.temperature), true, "head.inv_tau");
}

Var SimilarityHead::apply_temperature(const Var& sims) const {
    if (inv_tau.defined()) return mul(sims, inv_tau);
    return scale(sims, 1.0 / temperature);
}

void SimilarityHead::collect(ParamList& out) const {
    if (inv_tau.defined()) out.push_back({inv_tau.name(), inv_tau});
}

Var similarity_matrix(const Var& fv, const Var& ft) {
    if (fv.shape().size() != 2 || ft.shape().size() != 2 || fv.shape()[1] != ft.shape()[1])
        throw ShapeError("similarity_matrix: want [B,d] x [C,d], got " + shape_str(fv.shape()) + " x " +
                         shape_str(ft.shape()));
    Var a = l2_normalize(fv);
    Var b = l2_normalize(ft);
    return matmul(a, transpose(b, {1, 0}));
}

Var classification_loss(const Var& sims, const std::vector<std::size_t>& labels, const SimilarityHead& head) {
    const Shape& s = sims.shape();
    if (s.size() != 2) throw ShapeError("classification_loss: sims must be [B,C]");
    std::size_t b = s[0], c = s[1];
    if (labels.size() != b) throw ShapeError("classification_loss: label count mismatch");
    for (std::size_t l : labels)
        if (l >= c) throw ConfigError("classification_loss: label " + std::to_string(l) + " out of range");
    double eps = head.label_smoothing;
    if (eps > 0.0 && c < 2) throw ConfigError("classification_loss: smoothing needs at least 2 classes");

    Tensor targets({b, c});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
            targets[i * c + j] = (j == labels[i]) ? 1.0 - eps : eps / static_cast<double>(c - 1);

    Var logp = log_softmax(head.apply_temperature(sims), -1);
    Var weighted = mul(logp, Var::constant(std::move(targets)));
    return scale(mean_all(sum(weighted, 1)), -1.0);
}

double top_k_accuracy(const Tensor& sims, const std::vector<std::size_t>& labels, std::size_t k) {
    if (sims.rank() != 2) throw ShapeError("top_k_accuracy: sims must be [B,C]");
    std::size_t b = sims.shape[0], c = sims.shape[1];
    if (k == 0 || k > c) throw ConfigError("top_k_accuracy: k out of range");
    if (labels.size() != b) throw ShapeError("top_k_accuracy: label count mismatch");
    std::size_t hits = 0;
    std::vector<std::size_t> idx(c);
    for (std::size_t i = 0; i < b; ++i) {
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
            double vx = sims[i * c + x], vy = sims[i * c + y];
            if (vx != vy) return vx > vy;
            return x < y;
        });
        for (std::size_t j = 0; j < k; ++j)
            if (idx[j] == labels[i]) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(b);
}

std::vector<double> per_class_accuracy(const Tensor& sims, const std::vector<std::size_t>& labels,
                                       std::size_t num_classes) {
    std::size_t b = sims.shape[0], c = sims.shape[1];
    std::vector<double> correct(num_classes, 0.0), total(num_classes, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (sims[i * c + j] > sims[i * c + best]) best = j;
        total[labels[i]] += 1.0;
        if (best == labels[i]) correct[labels[i]] += 1.0;
    }
    std::vector<double> acc(num_classes, 0.0);
    for (std::size_t j = 0; j < num_classes; ++j) acc[j] = total[j] > 0 ? correct[j] / total[j] : 0.0;
    return acc;
}

} // namespace omniclip
