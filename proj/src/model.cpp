#include "omniclip/model.hpp"

#include "omniclip/backbone.hpp"

namespace omniclip {

OmniClipModel::OmniClipModel(const ModelConfig& cfg, std::vector<std::string> class_names)
    : cfg_(cfg), classes_(std::move(class_names)) {
    cfg.validate();
    video = OmniVideoEncoder(cfg);
    text = TextEncoder(classes_, cfg);
    head = SimilarityHead(cfg);
    text_feats_ = text.encode(classes_);
}

Var OmniClipModel::similarities(const Tensor& packed) const {
    Var fv = video.encode_packed(packed);
    return similarity_matrix(fv, Var::constant(text_feats_));
}

Var OmniClipModel::loss(const Tensor& packed, const std::vector<std::size_t>& labels) const {
    return classification_loss(similarities(packed), labels, head);
}

Tensor OmniClipModel::similarities_value(const Tensor& packed) const { return similarities(packed).value(); }

ParamList OmniClipModel::parameters() const {
    ParamList out;
    video.collect(out);
    text.collect(out);
    head.collect(out);
    return out;
}

Tensor assemble_packed(const DatasetManifest& m, const std::vector<std::size_t>& indices, std::size_t patch) {
    return PatchEmbedder::rearrange(assemble_pixels(m, indices), patch);
}

} // namespace omniclip
