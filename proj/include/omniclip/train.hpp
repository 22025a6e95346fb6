#pragma once

#include <map>
#include <optional>
#include <ostream>

#include "omniclip/model.hpp"

namespace omniclip {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double peak_lr = 5e-3;
    double min_lr = 5e-5;
    std::size_t warmup_epochs = 5;
    double weight_decay = 0.003;
    double beta1 = 0.9, beta2 = 0.98;
    double eps = 1e-8;
    double label_smoothing = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Schedule {
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 0;
    double peak = 0.0, min = 0.0;
};

// Linear warmup 0 -> peak over [0, warmup), cosine decay peak -> min over
// [warmup, total]. lr_at(warmup) == peak and lr_at(total) == min exactly.
double lr_at(std::size_t step, const Schedule& s);
Schedule make_schedule(const TrainConfig& cfg, std::size_t steps_per_epoch);

// Decoupled weight decay (value *= 1 - lr*wd), bias-corrected moments.
class AdamW {
public:
    AdamW() = default;
    AdamW(double beta1, double beta2, double eps, double weight_decay)
        : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

    void step(const ParamList& trainable, double lr);

    std::uint64_t steps_taken() const { return t_; }
    std::map<std::string, Tensor>& first_moments() { return m_; }
    std::map<std::string, Tensor>& second_moments() { return v_; }
    const std::map<std::string, Tensor>& first_moments() const { return m_; }
    const std::map<std::string, Tensor>& second_moments() const { return v_; }
    void restore(std::uint64_t t, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v);
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }
    double weight_decay() const { return wd_; }

private:
    double beta1_ = 0.9, beta2_ = 0.98, eps_ = 1e-8, wd_ = 0.0;
    std::uint64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

struct MetricsRow {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<std::size_t> epoch;
    std::optional<double> val_top1;

    nlohmann::json to_json() const;
};

enum class Protocol { Supervised, FewShot, ZeroShot };
Protocol protocol_from_string(const std::string& s);

struct EvalResult {
    double top1 = 0.0;
    std::vector<double> per_class;
    std::size_t count = 0;
};

EvalResult evaluate(const OmniClipModel& model, const DatasetManifest& manifest, Protocol proto,
                    std::size_t batch_size = 32);

// Deterministic single-process trainer. Batch order is a per-epoch seeded
// permutation derived from (seed, epoch), so a run can resume from any step
// and reproduce an uninterrupted run bit for bit.
class Trainer {
public:
    Trainer(OmniClipModel& model, const DatasetManifest& manifest, const TrainConfig& cfg);

    // Runs up to `max_steps` more steps (default: to the end of the
    // schedule). Appends one JSON line per step to `metrics` when given.
    std::vector<MetricsRow> run(std::ostream* metrics = nullptr,
                                std::size_t max_steps = static_cast<std::size_t>(-1));

    std::size_t steps_per_epoch() const { return steps_per_epoch_; }
    std::size_t total_steps() const { return schedule_.total_steps; }
    std::uint64_t global_step() const { return global_step_; }
    void set_global_step(std::uint64_t s) { global_step_ = s; }

    AdamW& optimizer() { return opt_; }
    SplitMix64& rng() { return rng_; }
    const TrainConfig& config() const { return cfg_; }

private:
    std::vector<std::size_t> epoch_order(std::size_t epoch) const;

    OmniClipModel& model_;
    const DatasetManifest& manifest_;
    TrainConfig cfg_;
    Tensor packed_train_; // [N,T,K,plen] cache
    std::vector<std::size_t> train_labels_;
    std::size_t steps_per_epoch_ = 0;
    Schedule schedule_;
    AdamW opt_;
    SplitMix64 rng_;
    std::uint64_t global_step_ = 0;
};

} // namespace omniclip
