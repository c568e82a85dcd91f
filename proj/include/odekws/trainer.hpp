#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "odekws/augment.hpp"
#include "odekws/dataset.hpp"
#include "odekws/errors.hpp"
#include "odekws/mfcc.hpp"
#include "odekws/model.hpp"
#include "odekws/ops.hpp"
#include "odekws/tape.hpp"
#include "odekws/tensor.hpp"

namespace odekws {

/// Optimizer and schedule settings. The per-variant factory pins the
/// published recipe; everything stays overridable for small-scale runs.
struct TrainConfig {
    double lr0 = 0.1;
    double momentum = 0.9;
    int batch_size = 64;
    int epochs = 30;
    std::vector<int> decay_steps = {5000, 9000};
    double decay_factor = 0.1;
    double weight_decay = 1e-3;
    double train_tolerance = 1e-3;
    std::uint64_t seed = 0;
    // raw-clip memoization limit for the training loop; larger corpora fall
    // back to re-reading from disk
    std::size_t wave_cache_cap = 10000;

    static TrainConfig for_variant(Variant v, std::uint64_t seed, int epochs = 30) {
        TrainConfig c;
        c.seed = seed;
        c.epochs = epochs;
        const bool tdnn = (v == Variant::tdnn32 || v == Variant::tdnn29);
        c.decay_steps = tdnn ? std::vector<int>{6000, 10000} : std::vector<int>{5000, 9000};
        c.weight_decay = tdnn ? 1e-5 : 1e-3;
        return c;
    }

    void validate() const {
        if (!(lr0 > 0.0) || !(decay_factor > 0.0)) throw ConfigError("learning rate settings must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
        if (batch_size < 1) throw ConfigError("batch size must be at least 1");
        if (epochs < 1) throw ConfigError("need at least one epoch");
        if (weight_decay < 0.0) throw ConfigError("weight decay cannot be negative");
        if (!(train_tolerance > 0.0)) throw ConfigError("training tolerance must be positive");
        for (size_t i = 1; i < decay_steps.size(); ++i)
            if (decay_steps[i] <= decay_steps[i - 1])
                throw ConfigError("decay steps must be strictly increasing");
    }
};

/// Stepped decay: lr0 scaled by decay_factor once per boundary already
/// reached. Steps count from zero.
inline double lr_at(int step, const TrainConfig& cfg) {
    int hits = 0;
    for (int boundary : cfg.decay_steps)
        if (boundary <= step) ++hits;
    return cfg.lr0 * std::pow(cfg.decay_factor, hits);
}

/// Momentum SGD with coupled L2: g' = g + wd*w; v <- mu*v + g'; w <- w - lr*v.
template <class Real>
class Sgd {
public:
    Sgd(std::vector<Parameter<Real>*> params, TrainConfig cfg)
        : params_(std::move(params)), cfg_(std::move(cfg)) {
        cfg_.validate();
        velocity_.reserve(params_.size());
        for (const auto* p : params_) velocity_.emplace_back(p->tensor.dims());
    }

    int step() const { return step_; }

    /// Consume the gradients currently stored on the parameters.
    void apply() {
        const double lr = lr_at(step_, cfg_);
        for (size_t i = 0; i < params_.size(); ++i) {
            Parameter<Real>& p = *params_[i];
            Tensor<Real>& v = velocity_[i];
            for (std::int64_t j = 0; j < p.tensor.size(); ++j) {
                const double g = static_cast<double>(p.gradient[j]) +
                                 cfg_.weight_decay * static_cast<double>(p.tensor[j]);
                const double vel = cfg_.momentum * static_cast<double>(v[j]) + g;
                v[j] = static_cast<Real>(vel);
                p.tensor[j] = static_cast<Real>(static_cast<double>(p.tensor[j]) - lr * vel);
            }
        }
        ++step_;
    }

    const Tensor<Real>& velocity(size_t i) const { return velocity_.at(i); }

private:
    std::vector<Parameter<Real>*> params_;
    TrainConfig cfg_;
    std::vector<Tensor<Real>> velocity_;
    int step_ = 0;
};

namespace detail {

inline constexpr std::uint64_t kAugmentStream = 0xa7617;

/// Raw-clip memoization for the training loop (features cannot be cached
/// there: augmentation reshapes every clip every epoch).
class WaveCache {
public:
    explicit WaveCache(std::size_t cap) : cap_(cap) {}

    std::vector<float> get(const Entry& e, const std::vector<std::vector<float>>& noise_pool) {
        const std::string key = e.is_silence ? "silence#" + std::to_string(e.salt) : e.path;
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        std::vector<float> clip = entry_waveform(e, noise_pool);
        if (cache_.size() < cap_) cache_.emplace(key, clip);
        return clip;
    }

private:
    std::size_t cap_;
    std::unordered_map<std::string, std::vector<float>> cache_;
};

template <class Real>
Tensor<Real> features_to_row_tensor(const std::vector<const std::vector<float>*>& rows,
                                    const MfccConfig& cfg) {
    const int frames = cfg.frames();
    Tensor<Real> out({static_cast<int>(rows.size()), frames, cfg.n_coeffs});
    std::int64_t at = 0;
    for (const auto* f : rows)
        for (float v : *f) out[at++] = static_cast<Real>(v);
    return out;
}

template <class Real>
int argmax_row(const Tensor<Real>& logits, int row) {
    const int n = logits.dims().back();
    int best = 0;
    for (int c = 1; c < n; ++c)
        if (logits[row * n + c] > logits[row * n + best]) best = c;
    return best;
}

}  // namespace detail

struct EvalResult {
    double accuracy = 0.0;
    double mean_nfe = 0.0;
    std::int64_t total_mults = 0;
    int correct = 0;
    int total = 0;
};

/// Top-1 accuracy over a split. In lbn mode every sample is solved
/// independently, which is what makes the result bit-identical whatever
/// the batch size; in naive mode samples share their batch's solve and
/// its (wrong at deployment) batch statistics.
template <class Real>
EvalResult evaluate(Model<Real>& model, const DatasetIndex& index, Split split,
                    double tolerance, int batch_size, BnMode bn_mode,
                    const std::vector<std::vector<float>>& noise_pool, FeatureCache& cache,
                    const MfccConfig& mfcc = {}) {
    const std::vector<Entry>& entries = index.split(split);
    if (entries.empty())
        throw EmptySplitError(std::string("split '") + split_name(split) + "' is empty");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");

    EvalResult out;
    out.total = static_cast<int>(entries.size());
    double nfe_sum = 0.0;

    ForwardOptions opts;
    opts.mode = RunMode::infer;
    opts.bn_mode = bn_mode;
    opts.tolerance = tolerance;

    if (bn_mode == BnMode::lbn) {
        for (const Entry& e : entries) {
            const std::vector<float>& f = cache.features(e, noise_pool, mfcc);
            Tape<Real> tape(false);
            auto res = forward(tape, model,
                               tape.leaf(detail::features_to_row_tensor<Real>({&f}, mfcc)),
                               opts);
            if (detail::argmax_row(tape.value(res.logits), 0) == e.label) ++out.correct;
            nfe_sum += res.stats.nfe;
        }
    } else {
        const auto batches =
            epoch_batches(entries.size(), batch_size, /*seed=*/0, /*epoch=*/0,
                          /*shuffled=*/false);
        for (const auto& batch : batches) {
            std::vector<const std::vector<float>*> rows;
            rows.reserve(batch.size());
            for (size_t idx : batch) rows.push_back(&cache.features(entries[idx], noise_pool, mfcc));
            Tape<Real> tape(false);
            auto res = forward(tape, model,
                               tape.leaf(detail::features_to_row_tensor<Real>(rows, mfcc)),
                               opts);
            for (size_t r = 0; r < batch.size(); ++r)
                if (detail::argmax_row(tape.value(res.logits), static_cast<int>(r)) ==
                    entries[batch[r]].label)
                    ++out.correct;
            nfe_sum += static_cast<double>(res.stats.nfe) * static_cast<double>(batch.size());
        }
    }

    out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.total);
    out.mean_nfe = nfe_sum / static_cast<double>(out.total);
    const CostReport costs = cost(model.spec);
    out.total_mults = std::llround(static_cast<double>(costs.mults_fixed) +
                                   static_cast<double>(costs.mults_per_eval) * out.mean_nfe);
    return out;
}

struct EpochMetrics {
    int epoch = 0;  // 1-based
    double val_accuracy = 0.0;
    double mean_nfe = 0.0;
};

struct TrainResult {
    std::vector<std::pair<int, double>> step_losses;  // (1-based step, loss)
    std::vector<EpochMetrics> epoch_metrics;
    double best_validation_accuracy = 0.0;
    int produced_epoch = 0;  // the epoch whose statistics ship with the weights
};

/// The full optimization loop: per epoch, reset the statistics database,
/// run one shuffled pass of augmented batches, then score the validation
/// split at the variant's inference tolerance. Deterministic given the
/// config's seed.
template <class Real>
TrainResult train(Model<Real>& model, const DatasetIndex& index,
                  const std::vector<std::vector<float>>& noise_pool, const TrainConfig& cfg,
                  const MfccConfig& mfcc = {}, std::ostream* log = nullptr) {
    cfg.validate();
    const std::vector<Entry>& train_entries = index.train;
    if (train_entries.empty()) throw EmptySplitError("training split is empty");

    Sgd<Real> sgd(model.parameters(), cfg);
    detail::WaveCache waves(cfg.wave_cache_cap);
    FeatureCache eval_cache;
    TrainResult out;

    ForwardOptions opts;
    opts.mode = RunMode::train;
    opts.tolerance = cfg.train_tolerance;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        model.db.reset();
        const auto batches =
            epoch_batches(train_entries.size(), cfg.batch_size, cfg.seed, epoch, true);
        std::mt19937_64 aug_rng(detail::derive_seed(cfg.seed, detail::kAugmentStream,
                                                    static_cast<std::uint64_t>(epoch)));
        for (const auto& batch : batches) {
            std::vector<std::vector<float>> feats;
            std::vector<int> labels;
            feats.reserve(batch.size());
            labels.reserve(batch.size());
            for (size_t idx : batch) {
                const Entry& e = train_entries[idx];
                const std::vector<float> clip = waves.get(e, noise_pool);
                feats.push_back(mfcc_features(augment_clip(clip, noise_pool, aug_rng), mfcc));
                labels.push_back(e.label);
            }
            std::vector<const std::vector<float>*> rows;
            rows.reserve(feats.size());
            for (const auto& f : feats) rows.push_back(&f);

            Tape<Real> tape(true);
            auto res = forward(tape, model,
                               tape.leaf(detail::features_to_row_tensor<Real>(rows, mfcc)),
                               opts);
            Value loss = softmax_xent_mean(tape, res.logits, labels);
            const double loss_value = static_cast<double>(tape.value(loss)[0]);
            if (!std::isfinite(loss_value))
                throw NonFiniteLossError("training diverged at step " +
                                         std::to_string(sgd.step() + 1));
            model.zero_grads();
            tape.backward(loss);
            sgd.apply();
            out.step_losses.emplace_back(sgd.step(), loss_value);
        }

        const EvalResult val =
            evaluate(model, index, Split::val, model.spec.infer_tolerance, cfg.batch_size,
                     BnMode::lbn, noise_pool, eval_cache, mfcc);
        EpochMetrics m;
        m.epoch = epoch + 1;
        m.val_accuracy = val.accuracy;
        m.mean_nfe = val.mean_nfe;
        out.epoch_metrics.push_back(m);
        if (val.accuracy > out.best_validation_accuracy)
            out.best_validation_accuracy = val.accuracy;
        if (log)
            (*log) << "epoch " << m.epoch << "/" << cfg.epochs << ": val_accuracy="
                   << m.val_accuracy << " mean_nfe=" << m.mean_nfe << " steps=" << sgd.step()
                   << "\n";
    }
    out.produced_epoch = cfg.epochs;
    return out;
}

}  // namespace odekws
