#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "odekws/errors.hpp"
#include "odekws/ops.hpp"
#include "odekws/tape.hpp"
#include "odekws/tensor.hpp"

namespace odekws {

/// One normalization site. Statistics are tracked per channel; epsilon
/// guards the variance inside the square root.
struct LbnLayer {
    std::string layer_id;
    int channels = 0;
    double epsilon = 1e-5;
};

/// Per-channel first and second moments plus how many observations
/// (batch x time elements per channel) they summarize.
template <class Real>
struct StatRecord {
    std::vector<Real> mean;
    std::vector<Real> var;
    std::uint64_t count = 0;
};

/// Continuous layer times are keyed by rounding to six decimal places, so
/// near-duplicate solver times across batches land on one record.
inline std::int64_t lbn_time_key(double t) { return std::llround(t * 1e6); }

/// Reserved time for normalization sites outside the integrated block
/// (the stem). Training and inference both use it verbatim, so lookups at
/// this key are always exact hits.
inline constexpr double kStemTime = -1.0;

/// The (layer, time) -> statistics store. Written during training (one
/// writer), immutable and freely shared during inference.
template <class Real>
class LbnDatabase {
public:
    using LayerMap = std::map<std::int64_t, StatRecord<Real>>;

    /// Fold one batch's statistics into the record at the quantized time:
    /// count-weighted running average of both mean and variance.
    void merge(const std::string& layer_id, double t, const std::vector<double>& mean,
               const std::vector<double>& var, std::uint64_t count) {
        if (count == 0) throw ConfigError("statistics merge needs at least one observation");
        if (mean.size() != var.size())
            throw ShapeError("mean and variance must have the same channel count");
        const std::int64_t key = lbn_time_key(t);
        StatRecord<Real>& rec = layers_[layer_id][key];
        if (rec.count == 0) {
            rec.mean.assign(mean.begin(), mean.end());
            rec.var.assign(var.begin(), var.end());
            rec.count = count;
            return;
        }
        if (rec.mean.size() != mean.size())
            throw ShapeError("channel count changed between merges for layer '" + layer_id +
                             "'");
        const double total = static_cast<double>(rec.count) + static_cast<double>(count);
        const double w_old = static_cast<double>(rec.count) / total;
        const double w_new = static_cast<double>(count) / total;
        for (size_t i = 0; i < mean.size(); ++i) {
            rec.mean[i] = static_cast<Real>(w_old * static_cast<double>(rec.mean[i]) +
                                            w_new * mean[i]);
            rec.var[i] = static_cast<Real>(w_old * static_cast<double>(rec.var[i]) +
                                           w_new * var[i]);
        }
        rec.count += count;
    }

    /// Insert a fully-formed record (checkpoint loading). Replaces any
    /// record already at that key.
    void restore(const std::string& layer_id, double t, StatRecord<Real> rec) {
        layers_[layer_id][lbn_time_key(t)] = std::move(rec);
    }

    /// Statistics for a query time: exact hit returns the stored record;
    /// between two keys, componentwise linear interpolation; outside the
    /// stored range, the nearest endpoint.
    StatRecord<Real> interpolate(const std::string& layer_id, double t) const {
        auto lit = layers_.find(layer_id);
        if (lit == layers_.end() || lit->second.empty())
            throw EmptyDatabaseError("no stored statistics for layer '" + layer_id + "'");
        const LayerMap& recs = lit->second;
        const std::int64_t key = lbn_time_key(t);
        auto it = recs.lower_bound(key);
        if (it != recs.end() && it->first == key) return it->second;
        if (it == recs.begin()) return it->second;           // below the range
        if (it == recs.end()) return std::prev(it)->second;  // above the range
        const auto& [k2, r2] = *it;
        const auto& [k1, r1] = *std::prev(it);
        const double t1 = static_cast<double>(k1) * 1e-6;
        const double t2 = static_cast<double>(k2) * 1e-6;
        double w = (t - t1) / (t2 - t1);
        w = std::min(1.0, std::max(0.0, w));
        StatRecord<Real> out;
        out.mean.resize(r1.mean.size());
        out.var.resize(r1.var.size());
        for (size_t i = 0; i < out.mean.size(); ++i) {
            out.mean[i] = static_cast<Real>((1.0 - w) * static_cast<double>(r1.mean[i]) +
                                            w * static_cast<double>(r2.mean[i]));
            out.var[i] = static_cast<Real>((1.0 - w) * static_cast<double>(r1.var[i]) +
                                           w * static_cast<double>(r2.var[i]));
        }
        out.count = 1;  // transient record; the count is not meaningful here
        return out;
    }

    bool has(const std::string& layer_id) const {
        auto it = layers_.find(layer_id);
        return it != layers_.end() && !it->second.empty();
    }

    /// Start a fresh collection epoch.
    void reset() { layers_.clear(); }

    bool empty() const {
        for (const auto& [name, recs] : layers_)
            if (!recs.empty()) return false;
        return true;
    }

    const std::map<std::string, LayerMap>& layers() const { return layers_; }

private:
    std::map<std::string, LayerMap> layers_;
};

namespace detail {

/// Per-channel mean and biased variance over the batch and temporal axes.
/// Accumulated in double whatever the tensor's element type.
template <class Real>
void batch_moments(const Tensor<Real>& x, int channels, std::vector<double>& mean,
                   std::vector<double>& var) {
    const TimeShape sh = time_shape(x.dims());
    if (sh.ch != channels)
        throw ShapeError("expected " + std::to_string(channels) + " channels, input has " +
                         std::to_string(sh.ch));
    const int64_t rows = static_cast<int64_t>(sh.batch) * sh.len;
    mean.assign(static_cast<size_t>(channels), 0.0);
    var.assign(static_cast<size_t>(channels), 0.0);
    const Real* p = x.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int c = 0; c < channels; ++c) mean[static_cast<size_t>(c)] += p[r * channels + c];
    for (int c = 0; c < channels; ++c) mean[static_cast<size_t>(c)] /= static_cast<double>(rows);
    for (int64_t r = 0; r < rows; ++r)
        for (int c = 0; c < channels; ++c) {
            const double d = static_cast<double>(p[r * channels + c]) -
                             mean[static_cast<size_t>(c)];
            var[static_cast<size_t>(c)] += d * d;
        }
    for (int c = 0; c < channels; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(rows);
}

/// Normalize with the given per-channel constants. `through_stats` selects
/// the backward rule: true differentiates mean/variance as functions of the
/// input batch, false treats them as constants (database statistics).
template <class Real>
Value push_normalized(Tape<Real>& tape, Value x, std::vector<double> mean,
                      std::vector<double> inv_std, bool through_stats) {
    const Tensor<Real>& xin = tape.value(x);
    const TimeShape sh = time_shape(xin.dims());
    const int ch = sh.ch;
    const int64_t rows = static_cast<int64_t>(sh.batch) * sh.len;
    Tensor<Real> out(xin.dims());
    {
        const Real* p = xin.data();
        Real* q = out.data();
        for (int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < ch; ++c) {
                const size_t cc = static_cast<size_t>(c);
                q[r * ch + c] = static_cast<Real>(
                    (static_cast<double>(p[r * ch + c]) - mean[cc]) * inv_std[cc]);
            }
    }

    if (!through_stats) {
        return tape.push(std::move(out), [x, inv_std](Tape<Real>& t, const Tensor<Real>& g) {
            const TimeShape gs = time_shape(g.dims());
            const int64_t grows = static_cast<int64_t>(gs.batch) * gs.len;
            Tensor<Real> gx(g.dims());
            const Real* gp = g.data();
            Real* o = gx.data();
            for (int64_t r = 0; r < grows; ++r)
                for (int c = 0; c < gs.ch; ++c)
                    o[r * gs.ch + c] = static_cast<Real>(
                        static_cast<double>(gp[r * gs.ch + c]) *
                        inv_std[static_cast<size_t>(c)]);
            t.accumulate(x, std::move(gx));
        });
    }

    return tape.push(std::move(out), [x, mean, inv_std](Tape<Real>& t,
                                                        const Tensor<Real>& g) {
        const Tensor<Real>& xv = t.value(x);
        const TimeShape gs = time_shape(g.dims());
        const int ch2 = gs.ch;
        const int64_t grows = static_cast<int64_t>(gs.batch) * gs.len;
        const double m = static_cast<double>(grows);
        // dL/dx = inv_std * (g - mean(g) - y * mean(g*y)), means per channel
        std::vector<double> mg(static_cast<size_t>(ch2), 0.0);
        std::vector<double> mgy(static_cast<size_t>(ch2), 0.0);
        const Real* gp = g.data();
        const Real* xp = xv.data();
        for (int64_t r = 0; r < grows; ++r)
            for (int c = 0; c < ch2; ++c) {
                const size_t cc = static_cast<size_t>(c);
                const double gj = gp[r * ch2 + c];
                const double yj = (static_cast<double>(xp[r * ch2 + c]) - mean[cc]) *
                                  inv_std[cc];
                mg[cc] += gj;
                mgy[cc] += gj * yj;
            }
        for (int c = 0; c < ch2; ++c) {
            mg[static_cast<size_t>(c)] /= m;
            mgy[static_cast<size_t>(c)] /= m;
        }
        Tensor<Real> gx(g.dims());
        Real* o = gx.data();
        for (int64_t r = 0; r < grows; ++r)
            for (int c = 0; c < ch2; ++c) {
                const size_t cc = static_cast<size_t>(c);
                const double yj = (static_cast<double>(xp[r * ch2 + c]) - mean[cc]) *
                                  inv_std[cc];
                o[r * ch2 + c] = static_cast<Real>(
                    inv_std[cc] * (static_cast<double>(gp[r * ch2 + c]) - mg[cc] -
                                   yj * mgy[cc]));
            }
        t.accumulate(x, std::move(gx));
    });
}

inline std::vector<double> inv_std_from(const std::vector<double>& var, double epsilon) {
    std::vector<double> inv(var.size());
    for (size_t i = 0; i < var.size(); ++i) inv[i] = 1.0 / std::sqrt(var[i] + epsilon);
    return inv;
}

}  // namespace detail

/// Training-mode normalization: use this mini-batch's own per-channel
/// statistics (differentiated through them) and fold the statistics into
/// the database at the quantized time as a side effect.
template <class Real>
Value lbn_train(Tape<Real>& tape, Value x, double t, const LbnLayer& layer,
                LbnDatabase<Real>& db) {
    std::vector<double> mean, var;
    detail::batch_moments(tape.value(x), layer.channels, mean, var);
    const TimeShape sh = time_shape(tape.dims(x));
    db.merge(layer.layer_id, t, mean, var,
             static_cast<std::uint64_t>(sh.batch) * static_cast<std::uint64_t>(sh.len));
    return detail::push_normalized(tape, x, std::move(mean),
                                   detail::inv_std_from(var, layer.epsilon), true);
}

/// Inference-mode normalization: statistics fetched from the database
/// (interpolated over time), never from the current batch, so each sample's
/// output is independent of what else shares its batch.
template <class Real>
Value lbn_infer(Tape<Real>& tape, Value x, double t, const LbnLayer& layer,
                const LbnDatabase<Real>& db) {
    const StatRecord<Real> rec = db.interpolate(layer.layer_id, t);
    if (static_cast<int>(rec.mean.size()) != layer.channels)
        throw ShapeError("stored statistics for layer '" + layer.layer_id +
                         "' have the wrong channel count");
    std::vector<double> mean(rec.mean.begin(), rec.mean.end());
    std::vector<double> var(rec.var.begin(), rec.var.end());
    if (static_cast<int>(time_shape(tape.dims(x)).ch) != layer.channels)
        throw ShapeError("input channel count does not match layer '" + layer.layer_id + "'");
    return detail::push_normalized(tape, x, std::move(mean),
                                   detail::inv_std_from(var, layer.epsilon), false);
}

/// Conventional batch norm at inference: normalize by the current batch's
/// own statistics. Exists only to demonstrate why it fails at small batch
/// sizes; arithmetic is identical to lbn_train minus the database merge.
template <class Real>
Value naive_bn_infer(Tape<Real>& tape, Value x, const LbnLayer& layer) {
    std::vector<double> mean, var;
    detail::batch_moments(tape.value(x), layer.channels, mean, var);
    return detail::push_normalized(tape, x, std::move(mean),
                                   detail::inv_std_from(var, layer.epsilon), true);
}

}  // namespace odekws
