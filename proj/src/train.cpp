#include "omniclip/train.hpp"

#include <cmath>

namespace omniclip {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (min_lr > peak_lr) throw ConfigError("train: min_lr must not exceed peak_lr");
    // epochs == 0 is a valid no-op run
    if (epochs > 0 && warmup_epochs >= epochs) throw ConfigError("train: warmup_epochs must be smaller than epochs");
    if (epochs == 0 && warmup_epochs != 0) throw ConfigError("train: warmup without epochs");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("train: label_smoothing in [0,1)");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"peak_lr", c.peak_lr},
                       {"min_lr", c.min_lr},
                       {"warmup_epochs", c.warmup_epochs},
                       {"weight_decay", c.weight_decay},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"eps", c.eps},
                       {"label_smoothing", c.label_smoothing},
                       {"seed", c.seed}};
}

namespace {
template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
} // namespace

void from_json(const nlohmann::json& j, TrainConfig& c) {
    maybe(j, "epochs", c.epochs);
    maybe(j, "batch_size", c.batch_size);
    maybe(j, "peak_lr", c.peak_lr);
    maybe(j, "min_lr", c.min_lr);
    maybe(j, "warmup_epochs", c.warmup_epochs);
    maybe(j, "weight_decay", c.weight_decay);
    maybe(j, "beta1", c.beta1);
    maybe(j, "beta2", c.beta2);
    maybe(j, "eps", c.eps);
    maybe(j, "label_smoothing", c.label_smoothing);
    maybe(j, "seed", c.seed);
}

double lr_at(std::size_t step, const Schedule& s) {
    if (s.warmup_steps > 0 && step < s.warmup_steps)
        return s.peak * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    if (step >= s.total_steps) return s.min;
    double progress = static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
    return s.min + (s.peak - s.min) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

Schedule make_schedule(const TrainConfig& cfg, std::size_t steps_per_epoch) {
    Schedule s;
    s.warmup_steps = cfg.warmup_epochs * steps_per_epoch;
    s.total_steps = cfg.epochs * steps_per_epoch;
    s.peak = cfg.peak_lr;
    s.min = cfg.min_lr;
    return s;
}

void AdamW::step(const ParamList& trainable, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& p : trainable) {
        if (!p.var.trainable()) continue;
        Var var = p.var;
        Tensor& value = var.value();
        Tensor grad = var.grad_or_zero();
        Tensor& m = m_[p.name];
        Tensor& v = v_[p.name];
        if (!m.defined()) m = Tensor(value.shape);
        if (!v.defined()) v = Tensor(value.shape);
        double decay = 1.0 - lr * wd_;
        for (std::size_t i = 0; i < value.size(); ++i) {
            value[i] *= decay;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamW::restore(std::uint64_t t, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

nlohmann::json MetricsRow::to_json() const {
    nlohmann::json j{{"step", step}, {"lr", lr}, {"loss", loss}};
    if (epoch) j["epoch"] = *epoch;
    if (val_top1) j["top1"] = *val_top1;
    return j;
}

Protocol protocol_from_string(const std::string& s) {
    if (s == "supervised") return Protocol::Supervised;
    if (s == "few_shot") return Protocol::FewShot;
    if (s == "zero_shot") return Protocol::ZeroShot;
    throw ConfigError("unknown protocol: " + s);
}

EvalResult evaluate(const OmniClipModel& model, const DatasetManifest& manifest, Protocol proto,
                    std::size_t batch_size) {
    if (proto == Protocol::ZeroShot) {
        if (manifest.held_out.empty()) throw ConfigError("zero_shot: manifest has no held-out classes");
        for (std::size_t idx : manifest.train)
            for (std::size_t held : manifest.held_out)
                if (manifest.items[idx].label == held)
                    throw ConfigError("zero_shot: held-out class '" + manifest.classes[held] +
                                      "' appears in the training split");
    }
    const std::vector<std::size_t>& split = manifest.test;
    if (split.empty()) throw ConfigError("evaluate: empty test split");
    if (model.classes() != manifest.classes) throw ConfigError("evaluate: manifest classes disagree with model");

    std::size_t c = model.classes().size();
    Tensor all_sims({split.size(), c});
    std::vector<std::size_t> labels = labels_of(manifest, split);
    for (std::size_t at = 0; at < split.size(); at += batch_size) {
        std::size_t take = std::min(batch_size, split.size() - at);
        std::vector<std::size_t> chunk(split.begin() + at, split.begin() + at + take);
        Tensor packed = assemble_packed(manifest, chunk, model.config().patch);
        Tensor sims = model.similarities_value(packed);
        std::copy(sims.data.begin(), sims.data.end(), all_sims.data.begin() + at * c);
    }
    EvalResult res;
    res.top1 = top_k_accuracy(all_sims, labels, 1);
    res.per_class = per_class_accuracy(all_sims, labels, c);
    res.count = split.size();
    return res;
}

Trainer::Trainer(OmniClipModel& model, const DatasetManifest& manifest, const TrainConfig& cfg)
    : model_(model), manifest_(manifest), cfg_(cfg) {
    cfg.validate();
    if (manifest.train.empty()) throw ConfigError("train: empty training split");
    packed_train_ = assemble_packed(manifest, manifest.train, model.config().patch);
    train_labels_ = labels_of(manifest, manifest.train);
    steps_per_epoch_ = (manifest.train.size() + cfg.batch_size - 1) / cfg.batch_size;
    schedule_ = make_schedule(cfg, steps_per_epoch_);
    opt_ = AdamW(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    rng_ = SplitMix64(cfg.seed);
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
    std::vector<std::size_t> order(manifest_.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 shuffle_rng(cfg_.seed ^ (0xC0FFEEull + 0x9E3779B97F4A7C15ull * (epoch + 1)));
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    return order;
}

std::vector<MetricsRow> Trainer::run(std::ostream* metrics, std::size_t max_steps) {
    std::vector<MetricsRow> log;
    ParamList trainable = model_.trainable_parameters();
    std::size_t n = manifest_.train.size();
    std::size_t row = packed_train_.size() / n;
    std::size_t done = 0;
    std::vector<std::size_t> order;
    std::size_t order_epoch = static_cast<std::size_t>(-1);

    while (global_step_ < schedule_.total_steps && done < max_steps) {
        std::size_t epoch = global_step_ / steps_per_epoch_;
        std::size_t k = global_step_ % steps_per_epoch_;
        if (epoch != order_epoch) {
            order = epoch_order(epoch);
            order_epoch = epoch;
        }
        std::size_t begin = k * cfg_.batch_size;
        std::size_t take = std::min(cfg_.batch_size, n - begin);

        Tensor packed({take, packed_train_.shape[1], packed_train_.shape[2], packed_train_.shape[3]});
        std::vector<std::size_t> labels(take);
        for (std::size_t i = 0; i < take; ++i) {
            std::size_t src = order[begin + i];
            std::copy(packed_train_.data.begin() + src * row, packed_train_.data.begin() + (src + 1) * row,
                      packed.data.begin() + i * row);
            labels[i] = train_labels_[src];
        }

        zero_grads(trainable);
        Var loss = model_.loss(packed, labels);
        double loss_v = loss.value()[0];
        if (!std::isfinite(loss_v))
            throw NumericError("train: non-finite loss at step " + std::to_string(global_step_));
        backward(loss);
        double lr = lr_at(global_step_, schedule_);
        opt_.step(trainable, lr);

        MetricsRow rowlog;
        rowlog.step = global_step_;
        rowlog.lr = lr;
        rowlog.loss = loss_v;
        ++global_step_;
        ++done;
        if (k + 1 == steps_per_epoch_ && !manifest_.val.empty()) {
            rowlog.epoch = epoch;
            rowlog.val_top1 = [&] {
                std::size_t c = model_.classes().size();
                Tensor sims({manifest_.val.size(), c});
                for (std::size_t at = 0; at < manifest_.val.size(); at += cfg_.batch_size) {
                    std::size_t t = std::min(cfg_.batch_size, manifest_.val.size() - at);
                    std::vector<std::size_t> chunk(manifest_.val.begin() + at, manifest_.val.begin() + at + t);
                    Tensor p = assemble_packed(manifest_, chunk, model_.config().patch);
                    Tensor s = model_.similarities_value(p);
                    std::copy(s.data.begin(), s.data.end(), sims.data.begin() + at * c);
                }
                return top_k_accuracy(sims, labels_of(manifest_, manifest_.val), 1);
            }();
        }
        if (metrics) *metrics << rowlog.to_json().dump() << "\n";
        log.push_back(std::move(rowlog));
    }
    return log;
}

} // namespace omniclip
