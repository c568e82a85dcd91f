#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "odekws/ops.hpp"
#include "odekws/tape.hpp"
#include "odekws/tensor.hpp"

namespace odekws::testsupport {

/// Scalar head for gradient checks: sum_i w_i * x_i with fixed, position
/// dependent weights so transposed or shifted gradients cannot cancel out.
template <class Real>
Value weighted_sum(Tape<Real>& tape, Value x) {
    const Tensor<Real>& xv = tape.value(x);
    Real total = 0;
    for (size_t i = 0; i < xv.size(); ++i)
        total += static_cast<Real>(std::sin(double(i) + 1.0)) * xv[i];
    return tape.push(Tensor<Real>::scalar(total),
                     [x](Tape<Real>& t, const Tensor<Real>& g) {
                         Tensor<Real> gx(t.value(x).dims());
                         for (size_t i = 0; i < gx.size(); ++i)
                             gx[i] = static_cast<Real>(std::sin(double(i) + 1.0)) * g[0];
                         t.accumulate(x, std::move(gx));
                     });
}

template <class Real = double>
Tensor<Real> random_tensor(const std::vector<int>& dims, std::mt19937_64& rng,
                           double lo = -1.0, double hi = 1.0) {
    Tensor<Real> t(dims);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(dist(rng));
    return t;
}

/// Values with |x| in [0.3, 1.0]: keeps finite differences clear of the
/// rectifier kink at zero.
inline Tensor<double> random_away_from_zero(const std::vector<int>& dims,
                                            std::mt19937_64& rng) {
    Tensor<double> t(dims);
    std::uniform_real_distribution<double> mag(0.3, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (size_t i = 0; i < t.size(); ++i) t[i] = sign(rng) ? mag(rng) : -mag(rng);
    return t;
}

struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-5;
    double denom_floor = 1e-6;
    int coords_per_param = 20;
    uint64_t seed = 7;
};

/// Compare reverse-mode gradients against central finite differences for a
/// random subset of coordinates of each parameter. `build` must construct
/// the same scalar loss from the parameters' current tensors each call.
template <class Build>
void expect_gradients(const std::vector<Parameter<double>*>& params, Build build,
                      GradCheckOptions opt = {}) {
    for (auto* p : params) p->zero_grad();
    {
        Tape<double> tape(true);
        tape.backward(build(tape));
    }
    std::mt19937_64 rng(opt.seed);
    for (auto* p : params) {
        std::vector<size_t> order(p->tensor.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const size_t take =
            std::min(order.size(), static_cast<size_t>(opt.coords_per_param));
        for (size_t k = 0; k < take; ++k) {
            const size_t i = order[k];
            const double orig = p->tensor[i];
            p->tensor[i] = orig + opt.step;
            double fplus;
            {
                Tape<double> tape(false);
                fplus = tape.value(build(tape))[0];
            }
            p->tensor[i] = orig - opt.step;
            double fminus;
            {
                Tape<double> tape(false);
                fminus = tape.value(build(tape))[0];
            }
            p->tensor[i] = orig;
            const double fd = (fplus - fminus) / (2.0 * opt.step);
            const double analytic = p->gradient[i];
            const double rel = std::abs(analytic - fd) /
                               std::max({std::abs(analytic), std::abs(fd), opt.denom_floor});
            EXPECT_LT(rel, opt.tolerance)
                << p->name << "[" << i << "]: analytic " << analytic
                << " vs central difference " << fd;
        }
    }
}

}  // namespace odekws::testsupport
