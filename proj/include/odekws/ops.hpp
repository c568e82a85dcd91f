#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "odekws/errors.hpp"
#include "odekws/tape.hpp"
#include "odekws/tensor.hpp"

namespace odekws {

/// Uniform view of {len, ch} and {batch, len, ch} tensors.
struct TimeShape {
    int batch;
    int len;
    int ch;
    bool batched;
};

inline TimeShape time_shape(const std::vector<int>& dims) {
    if (dims.size() == 2) return TimeShape{1, dims[0], dims[1], false};
    if (dims.size() == 3) return TimeShape{dims[0], dims[1], dims[2], true};
    throw ShapeError("expected a {len, ch} or {batch, len, ch} tensor, got rank " +
                     std::to_string(dims.size()));
}

inline std::vector<int> time_dims(const TimeShape& s, int len, int ch) {
    if (s.batched) return {s.batch, len, ch};
    return {len, ch};
}

inline int conv_out_len(int len, int kernel, int stride, int pad) {
    return (len + 2 * pad - kernel) / stride + 1;
}

/// Temporal convolution (cross-correlation) with zero padding, no bias.
/// x: {len, c_in} or {batch, len, c_in}; w: {kernel, c_in, c_out}.
template <class Real>
Value conv_temporal(Tape<Real>& tape, Value x, Value w, int stride, int pad) {
    const Tensor<Real>& xv = tape.value(x);
    const Tensor<Real>& wv = tape.value(w);
    if (wv.rank() != 3)
        throw ShapeError("conv kernel must be {kernel, c_in, c_out}, got " +
                         Tensor<Real>::dims_str(wv.dims()));
    if (stride < 1) throw ShapeError("conv stride must be >= 1");
    if (pad < 0) throw ShapeError("conv padding must be >= 0");
    const TimeShape s = time_shape(xv.dims());
    const int kernel = wv.dim(0);
    const int cin = wv.dim(1);
    const int cout = wv.dim(2);
    if (s.ch != cin)
        throw ShapeError("conv input has " + std::to_string(s.ch) +
                         " channels but kernel expects " + std::to_string(cin));
    const int lo = conv_out_len(s.len, kernel, stride, pad);
    if (lo < 1)
        throw ShapeError("conv output would be empty: len " + std::to_string(s.len) +
                         ", kernel " + std::to_string(kernel));

    Tensor<Real> out(time_dims(s, lo, cout));
    const Real* px = xv.data();
    const Real* pw = wv.data();
    Real* py = out.data();
    for (int b = 0; b < s.batch; ++b) {
        const Real* xb = px + static_cast<size_t>(b) * s.len * cin;
        Real* yb = py + static_cast<size_t>(b) * lo * cout;
        for (int i = 0; i < lo; ++i) {
            Real* yrow = yb + static_cast<size_t>(i) * cout;
            for (int k = 0; k < kernel; ++k) {
                const int t = i * stride + k - pad;
                if (t < 0 || t >= s.len) continue;
                const Real* xrow = xb + static_cast<size_t>(t) * cin;
                const Real* wk = pw + static_cast<size_t>(k) * cin * cout;
                for (int ci = 0; ci < cin; ++ci) {
                    const Real xs = xrow[ci];
                    const Real* wrow = wk + static_cast<size_t>(ci) * cout;
                    for (int o = 0; o < cout; ++o) yrow[o] += xs * wrow[o];
                }
            }
        }
    }

    return tape.push(std::move(out), [x, w, stride, pad, s, kernel, cin, cout, lo](
                                         Tape<Real>& t, const Tensor<Real>& g) {
        const Tensor<Real>& xv = t.value(x);
        const Tensor<Real>& wv = t.value(w);
        Tensor<Real> gx(xv.dims());
        Tensor<Real> gw(wv.dims());
        const Real* px = xv.data();
        const Real* pw = wv.data();
        const Real* pg = g.data();
        Real* pgx = gx.data();
        Real* pgw = gw.data();
        for (int b = 0; b < s.batch; ++b) {
            const Real* xb = px + static_cast<size_t>(b) * s.len * cin;
            const Real* gb = pg + static_cast<size_t>(b) * lo * cout;
            Real* gxb = pgx + static_cast<size_t>(b) * s.len * cin;
            for (int i = 0; i < lo; ++i) {
                const Real* grow = gb + static_cast<size_t>(i) * cout;
                for (int k = 0; k < kernel; ++k) {
                    const int tt = i * stride + k - pad;
                    if (tt < 0 || tt >= s.len) continue;
                    const Real* xrow = xb + static_cast<size_t>(tt) * cin;
                    Real* gxrow = gxb + static_cast<size_t>(tt) * cin;
                    const Real* wk = pw + static_cast<size_t>(k) * cin * cout;
                    Real* gwk = pgw + static_cast<size_t>(k) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const Real* wrow = wk + static_cast<size_t>(ci) * cout;
                        Real* gwrow = gwk + static_cast<size_t>(ci) * cout;
                        const Real xs = xrow[ci];
                        Real acc = 0;
                        for (int o = 0; o < cout; ++o) {
                            const Real gs = grow[o];
                            acc += gs * wrow[o];
                            gwrow[o] += xs * gs;
                        }
                        gxrow[ci] += acc;
                    }
                }
            }
        }
        t.accumulate(x, std::move(gx));
        t.accumulate(w, std::move(gw));
    });
}

/// Average pooling over time, no padding. x: {len, c} or {batch, len, c}.
template <class Real>
Value avg_pool_temporal(Tape<Real>& tape, Value x, int window, int stride) {
    const Tensor<Real>& xv = tape.value(x);
    const TimeShape s = time_shape(xv.dims());
    if (window < 1 || stride < 1) throw ShapeError("pool window and stride must be >= 1");
    if (window > s.len)
        throw ShapeError("pool window " + std::to_string(window) +
                         " exceeds input length " + std::to_string(s.len));
    const int lo = (s.len - window) / stride + 1;

    Tensor<Real> out(time_dims(s, lo, s.ch));
    const Real inv = Real(1) / Real(window);
    const Real* px = xv.data();
    Real* py = out.data();
    for (int b = 0; b < s.batch; ++b) {
        const Real* xb = px + static_cast<size_t>(b) * s.len * s.ch;
        Real* yb = py + static_cast<size_t>(b) * lo * s.ch;
        for (int i = 0; i < lo; ++i) {
            Real* yrow = yb + static_cast<size_t>(i) * s.ch;
            for (int k = 0; k < window; ++k) {
                const Real* xrow = xb + static_cast<size_t>(i * stride + k) * s.ch;
                for (int c = 0; c < s.ch; ++c) yrow[c] += xrow[c] * inv;
            }
        }
    }

    return tape.push(std::move(out),
                     [x, window, stride, s, lo](Tape<Real>& t, const Tensor<Real>& g) {
                         Tensor<Real> gx(t.value(x).dims());
                         const Real inv = Real(1) / Real(window);
                         const Real* pg = g.data();
                         Real* pgx = gx.data();
                         for (int b = 0; b < s.batch; ++b) {
                             const Real* gb = pg + static_cast<size_t>(b) * lo * s.ch;
                             Real* gxb = pgx + static_cast<size_t>(b) * s.len * s.ch;
                             for (int i = 0; i < lo; ++i) {
                                 const Real* grow = gb + static_cast<size_t>(i) * s.ch;
                                 for (int k = 0; k < window; ++k) {
                                     Real* gxrow =
                                         gxb + static_cast<size_t>(i * stride + k) * s.ch;
                                     for (int c = 0; c < s.ch; ++c) gxrow[c] += grow[c] * inv;
                                 }
                             }
                         }
                         t.accumulate(x, std::move(gx));
                     });
}

/// Fully connected map, no bias. x: {c_in} or {batch, c_in}; w: {c_in, c_out}.
template <class Real>
Value affine(Tape<Real>& tape, Value x, Value w) {
    const Tensor<Real>& xv = tape.value(x);
    const Tensor<Real>& wv = tape.value(w);
    if (wv.rank() != 2)
        throw ShapeError("affine weight must be {c_in, c_out}, got " +
                         Tensor<Real>::dims_str(wv.dims()));
    const int cin = wv.dim(0);
    const int cout = wv.dim(1);
    int batch = 1;
    bool batched = false;
    if (xv.rank() == 1) {
        if (xv.dim(0) != cin)
            throw ShapeError("affine input has " + std::to_string(xv.dim(0)) +
                             " features but weight expects " + std::to_string(cin));
    } else if (xv.rank() == 2) {
        batched = true;
        batch = xv.dim(0);
        if (xv.dim(1) != cin)
            throw ShapeError("affine input has " + std::to_string(xv.dim(1)) +
                             " features but weight expects " + std::to_string(cin));
    } else {
        throw ShapeError("affine input must be rank 1 or 2, got " +
                         Tensor<Real>::dims_str(xv.dims()));
    }

    Tensor<Real> out(batched ? std::vector<int>{batch, cout} : std::vector<int>{cout});
    const Real* px = xv.data();
    const Real* pw = wv.data();
    Real* py = out.data();
    for (int b = 0; b < batch; ++b) {
        const Real* xrow = px + static_cast<size_t>(b) * cin;
        Real* yrow = py + static_cast<size_t>(b) * cout;
        for (int ci = 0; ci < cin; ++ci) {
            const Real xs = xrow[ci];
            const Real* wrow = pw + static_cast<size_t>(ci) * cout;
            for (int o = 0; o < cout; ++o) yrow[o] += xs * wrow[o];
        }
    }

    return tape.push(std::move(out),
                     [x, w, batch, cin, cout](Tape<Real>& t, const Tensor<Real>& g) {
                         const Tensor<Real>& xv = t.value(x);
                         const Tensor<Real>& wv = t.value(w);
                         Tensor<Real> gx(xv.dims());
                         Tensor<Real> gw(wv.dims());
                         const Real* px = xv.data();
                         const Real* pw = wv.data();
                         const Real* pg = g.data();
                         Real* pgx = gx.data();
                         Real* pgw = gw.data();
                         for (int b = 0; b < batch; ++b) {
                             const Real* xrow = px + static_cast<size_t>(b) * cin;
                             const Real* grow = pg + static_cast<size_t>(b) * cout;
                             Real* gxrow = pgx + static_cast<size_t>(b) * cin;
                             for (int ci = 0; ci < cin; ++ci) {
                                 const Real* wrow = pw + static_cast<size_t>(ci) * cout;
                                 Real* gwrow = pgw + static_cast<size_t>(ci) * cout;
                                 const Real xs = xrow[ci];
                                 Real acc = 0;
                                 for (int o = 0; o < cout; ++o) {
                                     acc += grow[o] * wrow[o];
                                     gwrow[o] += xs * grow[o];
                                 }
                                 gxrow[ci] += acc;
                             }
                         }
                         t.accumulate(x, std::move(gx));
                         t.accumulate(w, std::move(gw));
                     });
}

/// Elementwise rectifier; the subgradient at zero is zero.
template <class Real>
Value relu(Tape<Real>& tape, Value x) {
    const Tensor<Real>& xv = tape.value(x);
    Tensor<Real> out(xv.dims());
    for (size_t i = 0; i < xv.size(); ++i)
        out[i] = xv[i] > Real(0) ? xv[i] : Real(0);
    return tape.push(std::move(out), [x](Tape<Real>& t, const Tensor<Real>& g) {
        const Tensor<Real>& xv = t.value(x);
        Tensor<Real> gx(xv.dims());
        for (size_t i = 0; i < xv.size(); ++i)
            gx[i] = xv[i] > Real(0) ? g[i] : Real(0);
        t.accumulate(x, std::move(gx));
    });
}

/// View the same elements under new dims.
template <class Real>
Value reshape(Tape<Real>& tape, Value x, std::vector<int> dims) {
    const Tensor<Real>& xv = tape.value(x);
    if (Tensor<Real>::count(dims) != xv.size())
        throw ShapeError("reshape from " + Tensor<Real>::dims_str(xv.dims()) + " to " +
                         Tensor<Real>::dims_str(dims) + " changes element count");
    Tensor<Real> out(dims, xv.values());
    std::vector<int> old_dims = xv.dims();
    return tape.push(std::move(out),
                     [x, old_dims](Tape<Real>& t, const Tensor<Real>& g) {
                         t.accumulate(x, Tensor<Real>(old_dims, g.values()));
                     });
}

/// y = sum_i coef_i * x_i over same-shaped terms. Coefficients are plain
/// constants (no gradient flows into them).
template <class Real>
Value lincomb(Tape<Real>& tape, const std::vector<std::pair<double, Value>>& terms) {
    if (terms.empty()) throw ShapeError("lincomb needs at least one term");
    const Tensor<Real>& first = tape.value(terms[0].second);
    Tensor<Real> out(first.dims());
    for (const auto& [coef, v] : terms) {
        const Tensor<Real>& tv = tape.value(v);
        if (!tv.same_dims(first))
            throw ShapeError("lincomb terms disagree: " + Tensor<Real>::dims_str(first.dims()) +
                             " vs " + Tensor<Real>::dims_str(tv.dims()));
        const Real c = static_cast<Real>(coef);
        for (size_t i = 0; i < out.size(); ++i) out[i] += c * tv[i];
    }
    auto captured = terms;
    return tape.push(std::move(out),
                     [captured](Tape<Real>& t, const Tensor<Real>& g) {
                         for (const auto& [coef, v] : captured) {
                             Tensor<Real> gx(g.dims());
                             const Real c = static_cast<Real>(coef);
                             for (size_t i = 0; i < g.size(); ++i) gx[i] = c * g[i];
                             t.accumulate(v, std::move(gx));
                         }
                     });
}

/// Mean softmax cross-entropy over a batch. logits: {batch, classes};
/// labels: one class index per row. Returns a scalar.
template <class Real>
Value softmax_xent_mean(Tape<Real>& tape, Value logits, const std::vector<int>& labels) {
    const Tensor<Real>& lv = tape.value(logits);
    if (lv.rank() != 2)
        throw ShapeError("loss expects logits {batch, classes}, got " +
                         Tensor<Real>::dims_str(lv.dims()));
    const int batch = lv.dim(0);
    const int classes = lv.dim(1);
    if (static_cast<int>(labels.size()) != batch)
        throw ShapeError("got " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));

    Tensor<Real> probs({batch, classes});
    Real total = 0;
    for (int b = 0; b < batch; ++b) {
        const int y = labels[static_cast<size_t>(b)];
        if (y < 0 || y >= classes)
            throw ShapeError("label " + std::to_string(y) + " outside " +
                             std::to_string(classes) + " classes");
        const Real* row = lv.data() + static_cast<size_t>(b) * classes;
        Real* prow = probs.data() + static_cast<size_t>(b) * classes;
        Real mx = row[0];
        for (int j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
        Real z = 0;
        for (int j = 0; j < classes; ++j) {
            prow[j] = std::exp(row[j] - mx);
            z += prow[j];
        }
        for (int j = 0; j < classes; ++j) prow[j] /= z;
        total += std::log(z) - (row[y] - mx);
    }
    total /= static_cast<Real>(batch);

    std::vector<int> ycopy = labels;
    return tape.push(Tensor<Real>::scalar(total),
                     [logits, probs, ycopy, batch, classes](Tape<Real>& t,
                                                            const Tensor<Real>& g) {
                         const Real scale = g[0] / static_cast<Real>(batch);
                         Tensor<Real> gx({batch, classes});
                         for (int b = 0; b < batch; ++b) {
                             const Real* prow = probs.data() + static_cast<size_t>(b) * classes;
                             Real* grow = gx.data() + static_cast<size_t>(b) * classes;
                             for (int j = 0; j < classes; ++j) grow[j] = scale * prow[j];
                             grow[ycopy[static_cast<size_t>(b)]] -= scale;
                         }
                         t.accumulate(logits, std::move(gx));
                     });
}

}  // namespace odekws
