#include "omniclip/backbone.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace omniclip {

MhaParams make_mha(const std::string& prefix, std::size_t d, std::size_t heads, std::uint64_t seed, bool trainable) {
    MhaParams p;
    p.wq = make_linear_weight(prefix + ".wq", d, d, seed, trainable);
    p.bq = make_param(prefix + ".bq", {d}, seed, trainable, Init::Zero);
    p.wk = make_linear_weight(prefix + ".wk", d, d, seed, trainable);
    p.wv = make_linear_weight(prefix + ".wv", d, d, seed, trainable);
    p.bv = make_param(prefix + ".bv", {d}, seed, trainable, Init::Zero);
    p.wo = make_linear_weight(prefix + ".wo", d, d, seed, trainable);
    p.bo = make_param(prefix + ".bo", {d}, seed, trainable, Init::Zero);
    p.heads = heads;
    return p;
}

void collect_mha(const MhaParams& p, ParamList& out) {
    for (const Var& v : {p.wq, p.bq, p.wk, p.wv, p.bv, p.wo, p.bo}) out.push_back({v.name(), v});
}

ViTBlock::ViTBlock(const std::string& prefix, std::size_t d, std::size_t heads, std::uint64_t seed, bool trainable) {
    ln1.gamma = make_param(prefix + ".ln1.gamma", {d}, seed, trainable, Init::One);
    ln1.beta = make_param(prefix + ".ln1.beta", {d}, seed, trainable, Init::Zero);
    ln2.gamma = make_param(prefix + ".ln2.gamma", {d}, seed, trainable, Init::One);
    ln2.beta = make_param(prefix + ".ln2.beta", {d}, seed, trainable, Init::Zero);
    attn = make_mha(prefix + ".attn", d, heads, seed, trainable);
    w1 = make_linear_weight(prefix + ".mlp.w1", d, 4 * d, seed, trainable);
    b1 = make_param(prefix + ".mlp.b1", {4 * d}, seed, trainable, Init::Zero);
    w2 = make_linear_weight(prefix + ".mlp.w2", 4 * d, d, seed, trainable);
    b2 = make_param(prefix + ".mlp.b2", {d}, seed, trainable, Init::Zero);
}

Var ViTBlock::attention_sublayer(const Var& x, Var* attn_probs) const {
    return add(x, multi_head_attention(layer_norm(x, ln1.gamma, ln1.beta), attn, attn_probs));
}

Var ViTBlock::mlp_sublayer(const Var& h) const {
    return add(h, linear(gelu(linear(layer_norm(h, ln2.gamma, ln2.beta), w1, b1)), w2, b2));
}

Var ViTBlock::forward(const Var& x, Var* attn_probs) const { return mlp_sublayer(attention_sublayer(x, attn_probs)); }

void ViTBlock::collect(ParamList& out) const {
    for (const Var& v : {ln1.gamma, ln1.beta}) out.push_back({v.name(), v});
    collect_mha(attn, out);
    for (const Var& v : {ln2.gamma, ln2.beta, w1, b1, w2, b2}) out.push_back({v.name(), v});
}

PatchEmbedder::PatchEmbedder(const std::string& prefix, const ModelConfig& cfg, bool trainable)
    : patch(cfg.patch), channels(cfg.channels), dim(cfg.dim), image(cfg.image) {
    std::size_t in = patch * patch * channels;
    proj = make_linear_weight(prefix + ".proj", in, dim, cfg.seed, trainable);
    bias = make_param(prefix + ".bias", {dim}, cfg.seed, trainable, Init::Zero);
    cls = make_param(prefix + ".cls", {dim}, cfg.seed, trainable, Init::Normal, 0.1);
}

Tensor PatchEmbedder::rearrange(const Tensor& pixels, std::size_t patch) {
    if (pixels.rank() != 5) throw ShapeError("rearrange: expected [B,T,C,H,W], got " + shape_str(pixels.shape));
    std::size_t b = pixels.shape[0], t = pixels.shape[1], c = pixels.shape[2];
    std::size_t h = pixels.shape[3], w = pixels.shape[4];
    if (h % patch != 0 || w % patch != 0)
        throw ShapeError("patch_embed: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by patch " + std::to_string(patch));
    std::size_t side_y = h / patch, side_x = w / patch, k = side_y * side_x;
    std::size_t plen = patch * patch * c;
    Tensor out({b, t, k, plen});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ti = 0; ti < t; ++ti) {
            const double* frame = pixels.data.data() + ((bi * t + ti) * c) * h * w;
            for (std::size_t py = 0; py < side_y; ++py)
                for (std::size_t px = 0; px < side_x; ++px) {
                    double* dst = out.data.data() + (((bi * t + ti) * k) + py * side_x + px) * plen;
                    std::size_t q = 0;
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t y = 0; y < patch; ++y)
                            for (std::size_t x = 0; x < patch; ++x)
                                dst[q++] = frame[ci * h * w + (py * patch + y) * w + (px * patch + x)];
                }
        }
    return out;
}

Var PatchEmbedder::embed_packed(const Tensor& packed) const {
    if (packed.rank() != 4) throw ShapeError("embed_packed: expected [B,T,K,plen]");
    std::size_t b = packed.shape[0], t = packed.shape[1], k = packed.shape[2];
    Var tokens = linear(Var::constant(packed), proj, bias); // [B,T,K,d]
    Var cls_tok = expand(reshape(cls, {1, 1, 1, dim}), {b, t, 1, dim});
    return concat({cls_tok, tokens}, 2);
}

Var PatchEmbedder::embed_pixels(const Tensor& pixels) const { return embed_packed(rearrange(pixels, patch)); }

void PatchEmbedder::collect(ParamList& out) const {
    for (const Var& v : {proj, bias, cls}) out.push_back({v.name(), v});
}

Encodings::Encodings(const std::string& prefix, const ModelConfig& cfg) {
    std::size_t n = 1 + cfg.patch_count();
    pe = make_param(prefix + ".pe", {n, cfg.dim}, cfg.seed, false, Init::Normal, 0.1);
    te = make_param(prefix + ".te", {cfg.frames, cfg.dim}, cfg.seed, cfg.te_trainable, Init::Normal, 0.1);
}

void Encodings::collect(ParamList& out) const {
    out.push_back({pe.name(), pe});
    out.push_back({te.name(), te});
}

Var add_encodings(const Var& tokens, const Encodings& enc) {
    const Shape& s = tokens.shape();
    if (s.size() != 4) throw ShapeError("add_encodings: expected [B,T,N,d]");
    std::size_t t = enc.te.shape()[0], d = enc.te.shape()[1];
    if (s[1] != t || s[3] != d || s[2] != enc.pe.shape()[0])
        throw ShapeError("add_encodings: encoding extents disagree with tokens " + shape_str(s));
    return add(add(tokens, enc.pe), reshape(enc.te, {t, 1, d}));
}

// ------------------------------------------------------------- text encoder

namespace {
std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) words.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

const char* kTemplatePrefix[] = {"a", "video", "of"};
const char* kTemplateSuffix = "action";
} // namespace

TextEncoder::TextEncoder(const std::vector<std::string>& class_names, const ModelConfig& cfg) {
    std::set<std::string> words;
    for (const char* w : kTemplatePrefix) words.insert(w);
    words.insert(kTemplateSuffix);
    for (const auto& name : class_names)
        for (const auto& w : split_words(name)) words.insert(w);
    vocab_.assign(words.begin(), words.end());
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = i;

    for (const auto& name : class_names) max_len_ = std::max(max_len_, token_words(name).size());

    std::size_t d = cfg.dim;
    embed_ = make_param("text.embed", {vocab_.size(), d}, cfg.seed, false, Init::Normal, 0.1);
    pos_ = make_param("text.pos", {max_len_, d}, cfg.seed, false, Init::Normal, 0.1);
    blocks_.emplace_back("text.block0", d, cfg.heads, cfg.seed, false);
    blocks_.emplace_back("text.block1", d, cfg.heads, cfg.seed, false);
    proj_w_ = make_linear_weight("text.proj.w", d, cfg.out_dim, cfg.seed, false);
    proj_b_ = make_param("text.proj.b", {cfg.out_dim}, cfg.seed, false, Init::Zero);
}

std::vector<std::string> TextEncoder::token_words(const std::string& class_name) const {
    std::vector<std::string> words;
    for (const char* w : kTemplatePrefix) words.emplace_back(w);
    for (const auto& w : split_words(class_name)) words.push_back(w);
    words.emplace_back(kTemplateSuffix);
    return words;
}

std::vector<std::size_t> TextEncoder::token_ids(const std::string& class_name) const {
    std::vector<std::size_t> ids;
    for (const auto& w : token_words(class_name)) {
        auto it = index_.find(w);
        if (it == index_.end()) throw ConfigError("text_encode: out-of-vocabulary word '" + w + "'");
        ids.push_back(it->second);
    }
    return ids;
}

Tensor TextEncoder::encode(const std::vector<std::string>& class_names) const {
    std::size_t d = embed_.shape()[1];
    std::size_t out_dim = proj_b_.shape()[0];
    Tensor out({class_names.size(), out_dim});
    for (std::size_t ci = 0; ci < class_names.size(); ++ci) {
        std::vector<std::size_t> ids = token_ids(class_names[ci]);
        if (ids.size() > max_len_) throw ConfigError("text_encode: sequence longer than positional table");
        Var x = add(gather_rows(embed_, ids), slice(pos_, 0, 0, ids.size()));
        for (const auto& blk : blocks_) x = blk.forward(x);
        Var feat = linear(slice(x, 0, ids.size() - 1, 1), proj_w_, proj_b_); // final token
        for (std::size_t j = 0; j < out_dim; ++j) out[ci * out_dim + j] = feat.value()[j];
    }
    return out;
}

void TextEncoder::collect(ParamList& out) const {
    out.push_back({embed_.name(), embed_});
    out.push_back({pos_.name(), pos_});
    for (const auto& b : blocks_) b.collect(out);
    out.push_back({proj_w_.name(), proj_w_});
    out.push_back({proj_b_.name(), proj_b_});
}

} // namespace omniclip
