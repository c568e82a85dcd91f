#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "odekws/errors.hpp"
#include "odekws/lbn.hpp"
#include "odekws/ode.hpp"
#include "odekws/ops.hpp"
#include "odekws/tape.hpp"
#include "odekws/tensor.hpp"

namespace odekws {

enum class Variant { tcnn20, tcnn30, tdnn32, tdnn29 };

inline const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v = {Variant::tcnn20, Variant::tcnn30, Variant::tdnn32,
                                           Variant::tdnn29};
    return v;
}

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::tcnn20: return "ode-tcnn20";
        case Variant::tcnn30: return "ode-tcnn30";
        case Variant::tdnn32: return "ode-tdnn32";
        case Variant::tdnn29: return "ode-tdnn29";
    }
    throw ConfigError("unreachable variant");
}

inline Variant variant_from_name(const std::string& name) {
    for (Variant v : all_variants())
        if (variant_name(v) == name) return v;
    throw ConfigError("unknown model variant '" + name +
                      "' (expected ode-tcnn20, ode-tcnn30, ode-tdnn32 or ode-tdnn29)");
}

/// Everything that defines a variant: its width, how deep the integration
/// runs, and which tolerances it trains and serves at.
struct ModelSpec {
    Variant variant = Variant::tcnn20;
    int width = 20;           // channels (tcnn) or dimensionality (tdnn)
    bool is_tdnn = false;
    double depth = 1.0;       // integration endpoint T
    double train_tolerance = 1e-3;
    double infer_tolerance = 0.5;
    int n_classes = 12;

    static ModelSpec for_variant(Variant v, int n_classes = 12) {
        ModelSpec s;
        s.variant = v;
        s.n_classes = n_classes;
        switch (v) {
            case Variant::tcnn20:
                s.width = 20;
                s.is_tdnn = false;
                s.depth = 1.0;
                s.infer_tolerance = 0.5;
                break;
            case Variant::tcnn30:
                s.width = 30;
                s.is_tdnn = false;
                s.depth = 1.0;
                s.infer_tolerance = 0.5;
                break;
            case Variant::tdnn32:
                s.width = 32;
                s.is_tdnn = true;
                s.depth = 3.0;
                s.infer_tolerance = 1e-2;
                break;
            case Variant::tdnn29:
                s.width = 29;
                s.is_tdnn = true;
                s.depth = 3.0;
                s.infer_tolerance = 5e-3;
                break;
        }
        if (n_classes < 2) throw ConfigError("a classifier needs at least two classes");
        return s;
    }
};

/// Whether normalization draws on the current batch (train) or the
/// database (infer); and at inference, whether the database is actually
/// consulted or deliberately ignored (naive baseline).
enum class RunMode { train, infer };
enum class BnMode { lbn, naive };

/// One architecture row of the cost accounting. Multiplies inside the
/// integrated block recur once per function evaluation; everything else
/// is paid once per utterance.
struct LayerCost {
    std::string name;
    std::int64_t params = 0;
    std::int64_t mults = 0;
    bool per_eval = false;
};

struct CostReport {
    std::vector<LayerCost> rows;
    std::int64_t total_params = 0;
    std::int64_t mults_fixed = 0;
    std::int64_t mults_per_eval = 0;

    std::int64_t total_mults(int nfe) const {
        return mults_fixed + mults_per_eval * static_cast<std::int64_t>(nfe);
    }
};

/// Exact parameter and multiply counts: a layer with p weights evaluated
/// at L temporal positions costs p*L multiplies (edge zero-products are
/// counted; pooling, normalization and the rectifier cost none).
inline CostReport cost(const ModelSpec& spec) {
    CostReport r;
    const std::int64_t w = spec.width;
    const std::int64_t n = spec.n_classes;
    auto add = [&r](std::string name, std::int64_t params, std::int64_t out_len,
                    bool per_eval) {
        r.rows.push_back({std::move(name), params, params * out_len, per_eval});
    };
    if (spec.is_tdnn) {
        add("tdnn-sub", 3 * 40 * w, 34, false);
        add("tdnn", 3 * w * w, 34, true);
        add("fc", w * n, 1, false);
    } else {
        add("conv", 3 * 40 * w, 101, false);
        add("conv", 9 * w * w, 25, true);
        add("conv", 9 * w * w, 25, true);
        add("conv", 1 * w * w, 25, true);
        add("fc", w * n, 1, false);
    }
    for (const LayerCost& row : r.rows) {
        r.total_params += row.params;
        (row.per_eval ? r.mults_per_eval : r.mults_fixed) += row.mults;
    }
    return r;
}

/// A built model: weights, their normalization sites, and the statistics
/// database that rides along with them.
template <class Real>
struct Model {
    ModelSpec spec;
    std::vector<Parameter<Real>> params;  // stem, ode layer(s), fc — in graph order
    LbnLayer stem_norm;
    std::vector<LbnLayer> ode_norms;
    LbnDatabase<Real> db;

    Model(const ModelSpec& s, std::uint64_t seed) : spec(s) {
        const int w = spec.width;
        if (spec.is_tdnn) {
            params.emplace_back("stem_w", Tensor<Real>({3, 40, w}));
            params.emplace_back("ode_w1", Tensor<Real>({3, w, w}));
            ode_norms.push_back({"ode_norm1", w});
        } else {
            params.emplace_back("stem_w", Tensor<Real>({3, 40, w}));
            params.emplace_back("ode_w1", Tensor<Real>({9, w, w}));
            params.emplace_back("ode_w2", Tensor<Real>({9, w, w}));
            params.emplace_back("ode_w3", Tensor<Real>({1, w, w}));
            ode_norms.push_back({"ode_norm1", w});
            ode_norms.push_back({"ode_norm2", w});
            ode_norms.push_back({"ode_norm3", w});
        }
        params.emplace_back("fc_w", Tensor<Real>({w, spec.n_classes}));
        stem_norm = {"stem_norm", w};

        // uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)), one stream in
        // declaration order so a seed pins every weight
        std::mt19937_64 rng(seed);
        for (Parameter<Real>& p : params) {
            const double fan_in =
                static_cast<double>(p.tensor.size() / p.tensor.dims().back());
            const double bound = std::sqrt(6.0 / fan_in);
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (std::int64_t i = 0; i < p.tensor.size(); ++i)
                p.tensor[i] = static_cast<Real>(dist(rng));
        }
    }

    std::vector<Parameter<Real>*> parameters() {
        std::vector<Parameter<Real>*> out;
        out.reserve(params.size());
        for (Parameter<Real>& p : params) out.push_back(&p);
        return out;
    }

    Parameter<Real>& param(const std::string& name) {
        for (Parameter<Real>& p : params)
            if (p.name == name) return p;
        throw ConfigError("model has no parameter named '" + name + "'");
    }

    void zero_grads() {
        for (Parameter<Real>& p : params) p.zero_grad();
    }
};

template <class Real>
Model<Real> build_model(const ModelSpec& spec, std::uint64_t seed) {
    return Model<Real>(spec, seed);
}

struct ForwardOptions {
    RunMode mode = RunMode::infer;
    BnMode bn_mode = BnMode::lbn;
    double tolerance = 1e-3;
    int fixed_steps = 0;  // > 0 replaces the adaptive solve with n equal steps
};

struct ForwardResult {
    Value logits;
    SolveStats stats;
};

namespace detail {

/// One normalization site, routed by mode: batch statistics recorded to
/// the database while training, stored statistics (or deliberately the
/// batch's own, for the naive baseline) at inference.
template <class Real>
Value normalize(Tape<Real>& tape, Value x, double t, const LbnLayer& layer,
                Model<Real>& model, const ForwardOptions& opts) {
    if (opts.mode == RunMode::train) return lbn_train(tape, x, t, layer, model.db);
    if (opts.bn_mode == BnMode::naive) return naive_bn_infer(tape, x, layer);
    return lbn_infer(tape, x, t, layer, model.db);
}

}  // namespace detail

/// Run the full classifier: stem -> integrated dynamics block -> global
/// average pool -> linear head. Input is a batch of feature matrices
/// (batch x 101 frames x 40 coefficients); logits come back per class.
template <class Real>
ForwardResult forward(Tape<Real>& tape, Model<Real>& model, Value features,
                      const ForwardOptions& opts) {
    const std::vector<int> fd = tape.dims(features);  // copy: later pushes may reallocate
    if (fd.size() != 3 || fd[1] != 101 || fd[2] != 40)
        throw ShapeError("features must be batch x 101 x 40, got " +
                         Tensor<Real>::dims_str(fd));

    std::vector<Value> wv;
    wv.reserve(model.params.size());
    for (Parameter<Real>& p : model.params) wv.push_back(tape.watch(p));
    const Value fc_w = wv.back();

    // stem
    Value h = conv_temporal(tape, features, wv[0], model.spec.is_tdnn ? 3 : 1, 1);
    h = detail::normalize(tape, h, kStemTime, model.stem_norm, model, opts);
    h = relu(tape, h);
    if (!model.spec.is_tdnn) h = avg_pool_temporal(tape, h, 4, 4);

    auto dynamics = [&](Tape<Real>& t, Value y, double time) -> Value {
        if (model.spec.is_tdnn) {
            Value v = conv_temporal(t, y, wv[1], 1, 1);
            v = detail::normalize(t, v, time, model.ode_norms[0], model, opts);
            return relu(t, v);
        }
        Value v = conv_temporal(t, y, wv[1], 1, 4);
        v = detail::normalize(t, v, time, model.ode_norms[0], model, opts);
        v = relu(t, v);
        v = conv_temporal(t, v, wv[2], 1, 4);
        v = detail::normalize(t, v, time, model.ode_norms[1], model, opts);
        v = relu(t, v);
        v = conv_temporal(t, v, wv[3], 1, 0);
        return detail::normalize(t, v, time, model.ode_norms[2], model, opts);
    };

    ForwardResult out;
    if (opts.fixed_steps > 0) {
        auto [y, stats] =
            fixed_step_solve(tape, dynamics, h, model.spec.depth, opts.fixed_steps);
        h = y;
        out.stats = std::move(stats);
    } else {
        OdeConfig cfg;
        cfg.tolerance = opts.tolerance;
        cfg.depth = model.spec.depth;
        auto [y, stats] = dopri5_solve(tape, dynamics, h, cfg);
        h = y;
        out.stats = std::move(stats);
    }

    // global average pool over time, then the linear head
    const int len = tape.dims(h)[1];
    h = avg_pool_temporal(tape, h, len, len);
    h = reshape(tape, h, {fd[0], model.spec.width});
    out.logits = affine(tape, h, fc_w);
    return out;
}

}  // namespace odekws
