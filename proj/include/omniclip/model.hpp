#pragma once

#include "omniclip/data_synth.hpp"
#include "omniclip/encoder.hpp"
#include "omniclip/objective.hpp"

namespace omniclip {

// Video tower + frozen text tower + similarity head. Text features are
// computed once at construction (the text side is frozen).
class OmniClipModel {
public:
    OmniClipModel() = default;
    OmniClipModel(const ModelConfig& cfg, std::vector<std::string> class_names);

    Var similarities(const Tensor& packed) const; // [B, C] cosine matrix
    Var loss(const Tensor& packed, const std::vector<std::size_t>& labels) const;
    Tensor similarities_value(const Tensor& packed) const;

    ParamList parameters() const; // video + text + head, stable order
    ParamList trainable_parameters() const { return trainable_only(parameters()); }

    const ModelConfig& config() const { return cfg_; }
    const std::vector<std::string>& classes() const { return classes_; }
    const Tensor& text_features() const { return text_feats_; }

    OmniVideoEncoder video;
    TextEncoder text;
    SimilarityHead head;

private:
    ModelConfig cfg_;
    std::vector<std::string> classes_;
    Tensor text_feats_;
};

// Packs a manifest selection into patch rasters ready for encode_packed.
Tensor assemble_packed(const DatasetManifest& m, const std::vector<std::size_t>& indices, std::size_t patch);

} // namespace omniclip
