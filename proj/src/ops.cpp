#include "gradleak/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "gradleak/autodiff.hpp"

namespace gradleak {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kTwoOverSqrtPi = 1.1283791670955125739;

void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NonFiniteError(std::string(op) + ": non-finite result");
}

/// Wraps a computed buffer into a tensor and records it on the active tape
/// when any input participates in the graph.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs, autodiff::BackwardFn backward) {
    check_finite(op, data);
    Tensor out = Tensor::from_data(std::move(shape), std::move(data));
    auto* tape = autodiff::GradTape::active();
    if (!tape || !tape->recording()) return out;
    bool any = false;
    std::vector<std::shared_ptr<autodiff::Node>> in_nodes;
    in_nodes.reserve(inputs.size());
    for (const Tensor* t : inputs) {
        in_nodes.push_back(t->node());
        any = any || static_cast<bool>(t->node());
    }
    if (!any) return out;
    out.set_node(tape->emplace(op, std::move(in_nodes), std::move(backward)));
    return out;
}

std::vector<int64_t> make_strides(const Shape& shape) {
    std::vector<int64_t> strides(shape.size(), 1);
    for (int64_t i = static_cast<int64_t>(shape.size()) - 2; i >= 0; --i)
        strides[i] = strides[i + 1] * shape[i + 1];
    return strides;
}

std::pair<Tensor, Tensor> broadcast_pair(const char* op, const Tensor& a, const Tensor& b) {
    if (a.same_shape(b)) return {a, b};
    Shape bs = broadcast_shapes(a.shape(), b.shape(), op);
    Tensor ab = a.shape() == bs ? a : broadcast_to(a, bs);
    Tensor bb = b.shape() == bs ? b : broadcast_to(b, bs);
    return {ab, bb};
}

template <class Kernel>
Tensor ew_binary(const char* op, const Tensor& a0, const Tensor& b0, Kernel k,
                 std::function<std::vector<Tensor>(const Tensor&, const Tensor&, const Tensor&)>
                     backward_ab) {
    auto [a, b] = broadcast_pair(op, a0, b0);
    auto pa = a.data();
    auto pb = b.data();
    std::vector<double> out(pa.size());
    for (size_t i = 0; i < pa.size(); ++i) out[i] = k(pa[i], pb[i]);
    return make_result(op, a.shape(), std::move(out), {&a, &b},
                       [a = a, b = b, backward_ab](const Tensor& g) { return backward_ab(g, a, b); });
}

template <class Kernel>
Tensor ew_unary(const char* op, const Tensor& x, Kernel k,
                std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> backward_x) {
    auto px = x.data();
    std::vector<double> out(px.size());
    for (size_t i = 0; i < px.size(); ++i) out[i] = k(px[i]);
    return make_result(op, x.shape(), std::move(out), {&x},
                       [x = x, backward_x](const Tensor& g) { return backward_x(g, x); });
}

/// Max over the last axis, keepdim, not recorded. Subtracting it inside
/// softmax is exact for the gradient since softmax is shift invariant.
Tensor rowmax_detached(const Tensor& x) {
    if (x.ndim() < 1) throw ShapeError("softmax: scalar input");
    int64_t cols = x.dim(x.ndim() - 1);
    int64_t rows = x.numel() / cols;
    Shape out_shape = x.shape();
    out_shape.back() = 1;
    std::vector<double> out(static_cast<size_t>(rows));
    auto p = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        double m = p[static_cast<size_t>(r * cols)];
        for (int64_t c = 1; c < cols; ++c) m = std::max(m, p[static_cast<size_t>(r * cols + c)]);
        out[static_cast<size_t>(r)] = m;
    }
    return Tensor::from_data(std::move(out_shape), std::move(out));
}

Tensor scatter_flat_add(const Tensor& g, std::shared_ptr<const std::vector<int64_t>> idx,
                        Shape in_shape);

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
    size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (size_t i = 0; i < rank; ++i) {
        int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                             shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& target) {
    if (x.shape() == target) return x;
    size_t rank = target.size();
    if (x.shape().size() > rank)
        throw ShapeError("broadcast_to: rank of " + shape_str(x.shape()) + " exceeds " +
                         shape_str(target));
    size_t off = rank - x.shape().size();
    for (size_t i = 0; i < x.shape().size(); ++i)
        if (x.shape()[i] != target[off + i] && x.shape()[i] != 1)
            throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " incompatible with " +
                             shape_str(target));

    auto tstrides = make_strides(target);
    auto xstrides = make_strides(x.shape());
    auto px = x.data();
    std::vector<double> out(static_cast<size_t>(shape_numel(target)));
    for (size_t i = 0; i < out.size(); ++i) {
        int64_t rem = static_cast<int64_t>(i);
        int64_t src = 0;
        for (size_t d = 0; d < rank; ++d) {
            int64_t c = rem / tstrides[d];
            rem %= tstrides[d];
            if (d >= off && x.shape()[d - off] != 1) src += c * xstrides[d - off];
        }
        out[i] = px[static_cast<size_t>(src)];
    }
    return make_result("broadcast_to", target, std::move(out), {&x},
                       [src_shape = x.shape()](const Tensor& g) {
                           return std::vector<Tensor>{sum_to(g, src_shape)};
                       });
}

Tensor sum_to(const Tensor& x, const Shape& target) {
    if (x.shape() == target) return x;
    size_t rank = x.shape().size();
    if (target.size() > rank)
        throw ShapeError("sum_to: target rank " + shape_str(target) + " exceeds " +
                         shape_str(x.shape()));
    size_t off = rank - target.size();
    for (size_t i = 0; i < target.size(); ++i)
        if (target[i] != x.shape()[off + i] && target[i] != 1)
            throw ShapeError("sum_to: cannot reduce " + shape_str(x.shape()) + " to " +
                             shape_str(target));

    auto xstrides = make_strides(x.shape());
    auto tstrides = make_strides(target);
    auto px = x.data();
    std::vector<double> out(static_cast<size_t>(shape_numel(target)), 0.0);
    for (size_t i = 0; i < px.size(); ++i) {
        int64_t rem = static_cast<int64_t>(i);
        int64_t dst = 0;
        for (size_t d = 0; d < rank; ++d) {
            int64_t c = rem / xstrides[d];
            rem %= xstrides[d];
            if (d >= off && target[d - off] != 1) dst += c * tstrides[d - off];
        }
        out[static_cast<size_t>(dst)] += px[i];
    }
    return make_result("sum_to", target, std::move(out), {&x},
                       [src_shape = x.shape()](const Tensor& g) {
                           return std::vector<Tensor>{broadcast_to(g, src_shape)};
                       });
}

// ---------- elementwise ----------

Tensor add(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](const Tensor& g, const Tensor&, const Tensor&) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](const Tensor& g, const Tensor&, const Tensor&) {
            return std::vector<Tensor>{g, neg(g)};
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](const Tensor& g, const Tensor& a, const Tensor& b) {
            return std::vector<Tensor>{mul(g, b), mul(g, a)};
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "div", a, b, [](double x, double y) { return x / y; },
        [](const Tensor& g, const Tensor& a, const Tensor& b) {
            Tensor ga = div(g, b);
            Tensor gb = neg(div(mul(g, a), mul(b, b)));
            return std::vector<Tensor>{ga, gb};
        });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }

Tensor neg(const Tensor& x) {
    return ew_unary(
        "neg", x, [](double v) { return -v; },
        [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{neg(g)}; });
}

Tensor exp(const Tensor& x) {
    return ew_unary(
        "exp", x, [](double v) { return std::exp(v); },
        [](const Tensor& g, const Tensor& x) {
            // exp is recomputed rather than captured so the closure never
            // owns its own output node.
            return std::vector<Tensor>{mul(g, exp(x))};
        });
}

Tensor log(const Tensor& x) {
    return ew_unary(
        "log", x, [](double v) { return std::log(v); },
        [](const Tensor& g, const Tensor& x) { return std::vector<Tensor>{div(g, x)}; });
}

Tensor erf(const Tensor& x) {
    return ew_unary(
        "erf", x, [](double v) { return std::erf(v); },
        [](const Tensor& g, const Tensor& x) {
            Tensor pdf = mul(exp(neg(mul(x, x))), kTwoOverSqrtPi);
            return std::vector<Tensor>{mul(g, pdf)};
        });
}

Tensor pow(const Tensor& x, double exponent) {
    return ew_unary(
        "pow", x, [exponent](double v) { return std::pow(v, exponent); },
        [exponent](const Tensor& g, const Tensor& x) {
            if (exponent == 0.0) return std::vector<Tensor>{mul(g, 0.0)};
            return std::vector<Tensor>{mul(g, mul(pow(x, exponent - 1.0), exponent))};
        });
}

Tensor sigmoid(const Tensor& x) {
    return ew_unary(
        "sigmoid", x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](const Tensor& g, const Tensor& x) {
            Tensor s = sigmoid(x);
            return std::vector<Tensor>{mul(g, mul(s, sub(1.0, s)))};
        });
}

Tensor gelu(const Tensor& x) {
    // exact form, x/2 * (1 + erf(x/sqrt(2)))
    return mul(mul(x, 0.5), add(erf(mul(x, kInvSqrt2)), 1.0));
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (!(lo <= hi)) throw Error("clamp: lo > hi");
    auto px = x.data();
    std::vector<double> mask_data(px.size());
    for (size_t i = 0; i < px.size(); ++i) mask_data[i] = (px[i] >= lo && px[i] <= hi) ? 1.0 : 0.0;
    Tensor mask = Tensor::from_data(x.shape(), std::move(mask_data));
    return ew_unary(
        "clamp", x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
        [mask](const Tensor& g, const Tensor&) { return std::vector<Tensor>{mul(g, mask)}; });
}

// ---------- structure ----------

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {&x},
                       [src_shape = x.shape()](const Tensor& g) {
                           return std::vector<Tensor>{reshape(g, src_shape)};
                       });
}

Tensor permute(const Tensor& x, const std::vector<int64_t>& axes) {
    size_t rank = x.shape().size();
    if (axes.size() != rank) throw ShapeError("permute: axes rank mismatch");
    std::vector<bool> seen(rank, false);
    Shape out_shape(rank);
    for (size_t i = 0; i < rank; ++i) {
        int64_t a = axes[i];
        if (a < 0 || a >= static_cast<int64_t>(rank) || seen[static_cast<size_t>(a)])
            throw ShapeError("permute: invalid axis list");
        seen[static_cast<size_t>(a)] = true;
        out_shape[i] = x.shape()[static_cast<size_t>(a)];
    }
    auto xstrides = make_strides(x.shape());
    auto ostrides = make_strides(out_shape);
    auto px = x.data();
    std::vector<double> out(px.size());
    for (size_t i = 0; i < px.size(); ++i) {
        int64_t rem = static_cast<int64_t>(i);
        int64_t src = 0;
        for (size_t d = 0; d < rank; ++d) {
            int64_t c = rem / ostrides[d];
            rem %= ostrides[d];
            src += c * xstrides[static_cast<size_t>(axes[d])];
        }
        out[i] = px[static_cast<size_t>(src)];
    }
    std::vector<int64_t> inverse(rank);
    for (size_t i = 0; i < rank; ++i) inverse[static_cast<size_t>(axes[i])] = static_cast<int64_t>(i);
    return make_result("permute", std::move(out_shape), std::move(out), {&x},
                       [inverse](const Tensor& g) {
                           return std::vector<Tensor>{permute(g, inverse)};
                       });
}

Tensor transpose(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
    return permute(x, {1, 0});
}

namespace {

Tensor scatter_flat_add(const Tensor& g, std::shared_ptr<const std::vector<int64_t>> idx,
                        Shape in_shape) {
    std::vector<double> out(static_cast<size_t>(shape_numel(in_shape)), 0.0);
    auto pg = g.data();
    for (size_t i = 0; i < pg.size(); ++i) {
        int64_t j = (*idx)[i];
        if (j >= 0) out[static_cast<size_t>(j)] += pg[i];
    }
    return make_result("scatter", std::move(in_shape), std::move(out), {&g},
                       [idx, g_shape = g.shape()](const Tensor& gg) {
                           return std::vector<Tensor>{gather_flat(gg, idx, g_shape)};
                       });
}

}  // namespace

Tensor gather_flat(const Tensor& x, std::shared_ptr<const std::vector<int64_t>> idx,
                   Shape out_shape) {
    if (static_cast<int64_t>(idx->size()) != shape_numel(out_shape))
        throw ShapeError("gather: index map does not cover " + shape_str(out_shape));
    auto px = x.data();
    std::vector<double> out(idx->size());
    for (size_t i = 0; i < out.size(); ++i) {
        int64_t j = (*idx)[i];
        out[i] = j < 0 ? 0.0 : px[static_cast<size_t>(j)];
    }
    return make_result("gather", std::move(out_shape), std::move(out), {&x},
                       [idx, in_shape = x.shape()](const Tensor& g) {
                           return std::vector<Tensor>{scatter_flat_add(g, idx, in_shape)};
                       });
}

Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t len) {
    if (axis < 0 || axis >= x.ndim()) throw ShapeError("slice: axis out of range");
    if (start < 0 || len < 0 || start + len > x.dim(axis))
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") outside dim " +
                         std::to_string(x.dim(axis)));
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    auto xstrides = make_strides(x.shape());
    auto ostrides = make_strides(out_shape);
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(shape_numel(out_shape)));
    for (size_t i = 0; i < idx->size(); ++i) {
        int64_t rem = static_cast<int64_t>(i);
        int64_t src = 0;
        for (size_t d = 0; d < out_shape.size(); ++d) {
            int64_t c = rem / ostrides[d];
            rem %= ostrides[d];
            if (static_cast<int64_t>(d) == axis) c += start;
            src += c * xstrides[d];
        }
        (*idx)[i] = src;
    }
    return gather_flat(x, idx, out_shape);
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& base = parts[0].shape();
    if (axis < 0 || axis >= static_cast<int64_t>(base.size()))
        throw ShapeError("concat: axis out of range");
    Shape out_shape = base;
    out_shape[static_cast<size_t>(axis)] = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != static_cast<int64_t>(base.size()))
            throw ShapeError("concat: rank mismatch");
        for (size_t d = 0; d < base.size(); ++d)
            if (static_cast<int64_t>(d) != axis && p.shape()[d] != base[d])
                throw ShapeError("concat: " + shape_str(p.shape()) + " incompatible with " +
                                 shape_str(base) + " on non-concat dims");
        out_shape[static_cast<size_t>(axis)] += p.dim(axis);
    }

    auto ostrides = make_strides(out_shape);
    Tensor acc;
    int64_t offset = 0;
    for (const Tensor& p : parts) {
        auto pstrides = make_strides(p.shape());
        auto idx = std::make_shared<std::vector<int64_t>>(
            static_cast<size_t>(shape_numel(out_shape)), int64_t{-1});
        for (int64_t i = 0; i < shape_numel(out_shape); ++i) {
            int64_t rem = i;
            int64_t src = 0;
            bool inside = true;
            for (size_t d = 0; d < out_shape.size(); ++d) {
                int64_t c = rem / ostrides[d];
                rem %= ostrides[d];
                if (static_cast<int64_t>(d) == axis) {
                    c -= offset;
                    if (c < 0 || c >= p.dim(axis)) {
                        inside = false;
                        break;
                    }
                }
                src += c * pstrides[d];
            }
            if (inside) (*idx)[static_cast<size_t>(i)] = src;
        }
        Tensor embedded = gather_flat(p, idx, out_shape);
        acc = acc.defined() ? add(acc, embedded) : embedded;
        offset += p.dim(axis);
    }
    return acc;
}

// ---------- reductions ----------

Tensor sum(const Tensor& x) { return sum_to(x, Shape{}); }

Tensor sum_lastdim(const Tensor& x) {
    if (x.ndim() < 1) throw ShapeError("sum_lastdim: scalar input");
    Shape target = x.shape();
    target.back() = 1;
    return sum_to(x, target);
}

Tensor mean(const Tensor& x) { return mul(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor variance(const Tensor& x) {
    Tensor d = sub(x, mean(x));
    return mean(mul(d, d));
}

// ---------- contractions ----------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto pa = a.data();
    auto pb = b.data();
    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
            double av = pa[static_cast<size_t>(i * k + kk)];
            if (av == 0.0) continue;
            const double* brow = &pb[static_cast<size_t>(kk * n)];
            double* orow = &out[static_cast<size_t>(i * n)];
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    return make_result("matmul", {m, n}, std::move(out), {&a, &b},
                       [a = a, b = b](const Tensor& g) {
                           return std::vector<Tensor>{matmul(g, transpose(b)),
                                                      matmul(transpose(a), g)};
                       });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride,
              int64_t padding) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw ShapeError("conv2d: expected NCHW input and OIKK kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int64_t cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin || w.dim(3) != k)
        throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " does not match input " +
                         shape_str(x.shape()));
    if (bias.ndim() != 1 || bias.dim(0) != cout)
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(cout) + " channels");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    int64_t ho = (h + 2 * padding - k) / stride + 1;
    int64_t wo = (wd + 2 * padding - k) / stride + 1;
    if (ho < 1 || wo < 1)
        throw ShapeError("conv2d: kernel " + std::to_string(k) + " too large for padded input");

    // im2col: {B*Ho*Wo, Cin*K*K} patches, then a single matmul.
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->resize(static_cast<size_t>(batch * ho * wo * cin * k * k));
    size_t pos = 0;
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox)
                for (int64_t ci = 0; ci < cin; ++ci)
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            int64_t iy = oy * stride - padding + ky;
                            int64_t ix = ox * stride - padding + kx;
                            bool ok = iy >= 0 && iy < h && ix >= 0 && ix < wd;
                            (*idx)[pos++] = ok ? ((b * cin + ci) * h + iy) * wd + ix : -1;
                        }

    Tensor cols = gather_flat(x, idx, {batch * ho * wo, cin * k * k});
    Tensor wmat = transpose(reshape(w, {cout, cin * k * k}));
    Tensor out = add(matmul(cols, wmat), bias);  // bias broadcasts over rows
    out = reshape(out, {batch, ho, wo, cout});
    return permute(out, {0, 3, 1, 2});
}

Tensor softmax_lastdim(const Tensor& x) {
    Tensor z = sub(x, rowmax_detached(x));
    Tensor e = exp(z);
    return div(e, sum_lastdim(e));
}

Tensor log_softmax_lastdim(const Tensor& x) {
    Tensor z = sub(x, rowmax_detached(x));
    return sub(z, log(sum_lastdim(exp(z))));
}

}  // namespace gradleak
