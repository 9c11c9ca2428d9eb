#include "framepred/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "framepred/kernels.hpp"

namespace framepred {

namespace {

template <typename T>
void add_into(Tensor<T>& dst, std::span<const T> src) {
    auto d = dst.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

void require_rank4(const Shape& s, const char* what) {
    if (s.size() != 4) throw ShapeError(std::string(what) + ": expected (B,H,W,C), got " + to_string(s));
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterSet

template <typename T>
Parameter<T>& ParameterSet<T>::add(std::string name, Tensor<T> value) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    Tensor<T> grad(value.shape());
    params_.push_back(Parameter<T>{std::move(name), std::move(value), std::move(grad)});
    return params_.back();
}

template <typename T>
Parameter<T>* ParameterSet<T>::find(std::string_view name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

template <typename T>
const Parameter<T>* ParameterSet<T>::find(std::string_view name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

template <typename T>
Parameter<T>& ParameterSet<T>::get(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Parameter<T>& ParameterSet<T>::get(std::string_view name) const {
    if (const auto* p = find(name)) return *p;
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::size_t ParameterSet<T>::element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.data().begin(), p.grad.data().end(), T{0});
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = record_;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
    Node n;
    n.external = &p.value;
    n.requires_grad = record_;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::view(const Tensor<T>& value) {
    Node n;
    n.external = &value;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<std::size_t> inputs, Backward backward) {
    Node n;
    n.owned = std::move(value);
    if (record_) {
        n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [this](std::size_t id) { return nodes_.at(id).requires_grad; });
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.owned;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    // Parameter leaves accumulate straight into the parameter's gradient.
    Tensor<T>& g = n.param ? n.param->grad : n.grad;
    if (g.shape() != value(id).shape()) g = Tensor<T>(value(id).shape());
    return g;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (&loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
    if (value(loss.id()).size() != 1) {
        throw ShapeError("backward: loss must be a scalar node, got shape " +
                         to_string(value(loss.id()).shape()));
    }
    visited_.clear();
    if (!nodes_[loss.id()].requires_grad) return;
    grad_buffer(loss.id())[0] = T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.backward) continue;
        visited_.push_back(i);
        n.backward(*this, i);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = a.value();
    add_into<T>(out, b.value().data());
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) add_into<T>(t.grad_buffer(ia), g.data());
        if (t.requires_grad(ib)) add_into<T>(t.grad_buffer(ib), g.data());
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        if (t.requires_grad(ia)) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

template <typename T>
Var<T> sum(Var<T> a) {
    T acc{0};
    for (T v : a.value().data()) acc += v;
    const std::size_t ia = a.id();
    return a.tape().record(Tensor<T>({1}, acc), {ia}, [ia](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0];
        for (auto& v : t.grad_buffer(ia).data()) v += g;
    });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    Tensor<T> out = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {ia}, [ia](Tape<T>& t, std::size_t self) {
        add_into<T>(t.grad_buffer(ia), t.grad(self).data());
    });
}

template <typename T>
Var<T> relu(Var<T> a) {
    const auto& in = a.value();
    Tensor<T> out(in.shape());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {ia}, [ia](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        auto& ga = t.grad_buffer(ia);
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(g.size());
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            if (y[i] > T{0}) ga[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Var<T> dense(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) {
        throw ShapeError("dense: input " + to_string(xs) + " incompatible with weights " + to_string(ws));
    }
    const std::size_t batch = xs[0], in = xs[1], out_n = ws[1];
    if (bias && bias->shape() != Shape{out_n}) {
        throw ShapeError("dense: bias " + to_string(bias->shape()) + " does not match weights " +
                         to_string(ws));
    }
    Tensor<T> out({batch, out_n});
    T beta{0};
    if (bias) {
        for (std::size_t b = 0; b < batch; ++b)
            std::copy(bias->value().data().begin(), bias->value().data().end(), out.data().begin() + b * out_n);
        beta = T{1};
    }
    kernels::gemm<T>(false, false, batch, out_n, in, T{1}, x.value().data().data(), in,
                     w.value().data().data(), out_n, beta, out.data().data(), out_n);
    const std::size_t ix = x.id(), iw = w.id();
    const std::size_t ib = bias ? bias->id() : ix;
    const bool has_bias = bias.has_value();
    return x.tape().record(
        std::move(out), {ix, iw, ib}, [=](Tape<T>& t, std::size_t self) {
            const auto& g = t.grad(self);
            if (t.requires_grad(ix)) {
                kernels::gemm<T>(false, true, batch, in, out_n, T{1}, g.data().data(), out_n,
                                 t.value(iw).data().data(), out_n, T{1}, t.grad_buffer(ix).data().data(), in);
            }
            if (t.requires_grad(iw)) {
                kernels::gemm<T>(true, false, in, out_n, batch, T{1}, t.value(ix).data().data(), in,
                                 g.data().data(), out_n, T{1}, t.grad_buffer(iw).data().data(), out_n);
            }
            if (has_bias && t.requires_grad(ib)) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t o = 0; o < out_n; ++o) gb[o] += g[b * out_n + o];
            }
        });
}

// ---------------------------------------------------------------------------
// Convolutions

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride, std::size_t padding) {
    const auto g = kernels::ConvGeometry::for_conv(x.shape(), w.shape(), stride, padding);
    if (bias && bias->shape() != Shape{g.out_c}) {
        throw ShapeError("conv2d: bias " + to_string(bias->shape()) + " does not match weights " +
                         to_string(w.shape()));
    }
    Tensor<T> out({g.batch, g.out_h(), g.out_w(), g.out_c});
    kernels::conv2d_forward<T>(g, x.value().data(), w.value().data(),
                               bias ? bias->value().data() : std::span<const T>{}, out.data());
    const std::size_t ix = x.id(), iw = w.id();
    const std::size_t ib = bias ? bias->id() : ix;
    const bool has_bias = bias.has_value();
    return x.tape().record(std::move(out), {ix, iw, ib}, [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        if (t.requires_grad(ix)) {
            std::vector<T> dx(g.input_size());
            kernels::conv2d_backward_data<T>(g, gy.data(), t.value(iw).data(), dx);
            add_into<T>(t.grad_buffer(ix), dx);
        }
        const bool want_w = t.requires_grad(iw);
        const bool want_b = has_bias && t.requires_grad(ib);
        if (want_w || want_b) {
            std::vector<T> dw(g.weight_size());
            std::vector<T> db(want_b ? g.out_c : 0);
            kernels::conv2d_backward_weights<T>(g, t.value(ix).data(), gy.data(), dw, db);
            if (want_w) add_into<T>(t.grad_buffer(iw), dw);
            if (want_b) add_into<T>(t.grad_buffer(ib), db);
        }
    });
}

template <typename T>
Var<T> deconv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride,
                std::size_t padding) {
    // g describes the convolution from the deconv output space to its input space.
    const auto g = kernels::ConvGeometry::for_deconv(x.shape(), w.shape(), stride, padding);
    if (bias && bias->shape() != Shape{g.in_c}) {
        throw ShapeError("deconv2d: bias " + to_string(bias->shape()) + " does not match weights " +
                         to_string(w.shape()));
    }
    Tensor<T> out({g.batch, g.in_h, g.in_w, g.in_c});
    kernels::conv2d_backward_data<T>(g, x.value().data(), w.value().data(), out.data());
    if (bias) {
        const auto b = bias->value().data();
        auto o = out.data();
        const std::size_t pixels = out.size() / g.in_c;
        for (std::size_t p = 0; p < pixels; ++p)
            for (std::size_t c = 0; c < g.in_c; ++c) o[p * g.in_c + c] += b[c];
    }
    const std::size_t ix = x.id(), iw = w.id();
    const std::size_t ib = bias ? bias->id() : ix;
    const bool has_bias = bias.has_value();
    return x.tape().record(std::move(out), {ix, iw, ib}, [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        if (t.requires_grad(ix)) {
            std::vector<T> dx(g.output_size());
            kernels::conv2d_forward<T>(g, gy.data(), t.value(iw).data(), {}, dx);
            add_into<T>(t.grad_buffer(ix), dx);
        }
        if (t.requires_grad(iw)) {
            std::vector<T> dw(g.weight_size());
            kernels::conv2d_backward_weights<T>(g, gy.data(), t.value(ix).data(), dw, {});
            add_into<T>(t.grad_buffer(iw), dw);
        }
        if (has_bias && t.requires_grad(ib)) {
            auto& gb = t.grad_buffer(ib);
            const std::size_t pixels = gy.size() / g.in_c;
            for (std::size_t p = 0; p < pixels; ++p)
                for (std::size_t c = 0; c < g.in_c; ++c) gb[c] += gy[p * g.in_c + c];
        }
    });
}

// ---------------------------------------------------------------------------
// Channel ops

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank4(a.shape(), "concat_channels");
    require_rank4(b.shape(), "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw ShapeError("concat_channels: spatial mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
    const std::size_t ca = a.dim(3), cb = b.dim(3);
    const std::size_t px = a.dim(0) * a.dim(1) * a.dim(2);
    Tensor<T> out({a.dim(0), a.dim(1), a.dim(2), ca + cb});
    for (std::size_t p = 0; p < px; ++p) {
        std::copy_n(a.data().begin() + p * ca, ca, out.data().begin() + p * (ca + cb));
        std::copy_n(b.data().begin() + p * cb, cb, out.data().begin() + p * (ca + cb) + ca);
    }
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    require_rank4(a.shape(), "slice_channels");
    const std::size_t c = a.dim(3);
    if (begin > end || end > c) {
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + to_string(a.shape()));
    }
    const std::size_t px = a.dim(0) * a.dim(1) * a.dim(2), n = end - begin;
    Tensor<T> out({a.dim(0), a.dim(1), a.dim(2), n});
    for (std::size_t p = 0; p < px; ++p)
        std::copy_n(a.data().begin() + p * c + begin, n, out.data().begin() + p * n);
    return out;
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
    Tensor<T> out = concat_channels(a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    const std::size_t ca = a.shape()[3], cb = b.shape()[3];
    return a.tape().record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const std::size_t px = g.size() / (ca + cb);
        if (t.requires_grad(ia)) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t p = 0; p < px; ++p)
                for (std::size_t c = 0; c < ca; ++c) ga[p * ca + c] += g[p * (ca + cb) + c];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_buffer(ib);
            for (std::size_t p = 0; p < px; ++p)
                for (std::size_t c = 0; c < cb; ++c) gb[p * cb + c] += g[p * (ca + cb) + ca + c];
        }
    });
}

template <typename T>
Var<T> tile_action(Var<T> action, std::size_t height, std::size_t width) {
    const Shape& s = action.shape();
    if (s.size() != 2) throw ShapeError("tile_action: expected (B,A) action, got " + to_string(s));
    const std::size_t batch = s[0], a_n = s[1];
    Tensor<T> out({batch, height, width, a_n});
    const auto& av = action.value();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < height * width; ++p)
            std::copy_n(av.data().begin() + b * a_n, a_n, out.data().begin() + (b * height * width + p) * a_n);
    const std::size_t ia = action.id();
    return action.tape().record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t p = 0; p < height * width; ++p)
                for (std::size_t c = 0; c < a_n; ++c) ga[b * a_n + c] += g[(b * height * width + p) * a_n + c];
    });
}

template <typename T>
Var<T> linear_combine(Var<T> basis, Var<T> weights) {
    require_rank4(basis.shape(), "linear_combine");
    const std::size_t n = basis.shape()[3];
    if (weights.shape() != Shape{n}) {
        throw ShapeError("linear_combine: weights " + to_string(weights.shape()) +
                         " do not match basis channels of " + to_string(basis.shape()));
    }
    const auto& bv = basis.value();
    const auto& wv = weights.value();
    const std::ptrdiff_t px = static_cast<std::ptrdiff_t>(bv.size() / std::max<std::size_t>(n, 1));
    Tensor<T> out({basis.shape()[0], basis.shape()[1], basis.shape()[2], 1});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < px; ++p) {
        T acc{0};
        for (std::size_t i = 0; i < n; ++i) acc += wv[i] * bv[p * n + i];
        out[p] = acc;
    }
    const std::size_t ib = basis.id(), iw = weights.id();
    return basis.tape().record(std::move(out), {ib, iw}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& bv = t.value(ib);
        const auto& wv = t.value(iw);
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_buffer(ib);
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t p = 0; p < px; ++p)
                for (std::size_t i = 0; i < n; ++i) gb[p * n + i] += g[p] * wv[i];
        }
        if (t.requires_grad(iw)) {
            auto& gw = t.grad_buffer(iw);
            for (std::ptrdiff_t p = 0; p < px; ++p)
                for (std::size_t i = 0; i < n; ++i) gw[i] += g[p] * bv[p * n + i];
        }
    });
}

template <typename T>
Var<T> softmax_channels(Var<T> a) {
    const auto& in = a.value();
    if (in.rank() == 0 || in.shape().back() == 0) throw ShapeError("softmax_channels: empty channel axis");
    const std::size_t c = in.shape().back();
    const std::ptrdiff_t px = static_cast<std::ptrdiff_t>(in.size() / c);
    Tensor<T> out(in.shape());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < px; ++p) {
        const T* x = in.data().data() + p * c;
        T* y = out.data().data() + p * c;
        const T m = *std::max_element(x, x + c);
        T total{0};
        for (std::size_t i = 0; i < c; ++i) {
            y[i] = std::exp(x[i] - m);
            total += y[i];
        }
        for (std::size_t i = 0; i < c; ++i) y[i] /= total;
    }
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        auto& ga = t.grad_buffer(ia);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t p = 0; p < px; ++p) {
            T dot{0};
            for (std::size_t i = 0; i < c; ++i) dot += g[p * c + i] * y[p * c + i];
            for (std::size_t i = 0; i < c; ++i) ga[p * c + i] += y[p * c + i] * (g[p * c + i] - dot);
        }
    });
}

template <typename T>
Var<T> mse_loss(Var<T> pred, Var<T> target) {
    require_same_shape(pred.shape(), target.shape(), "mse_loss");
    const auto& pv = pred.value();
    const auto& tv = target.value();
    const std::size_t n = pv.size();
    if (n == 0) throw ShapeError("mse_loss: empty tensors");
    // Accumulate in double so float and double modes see the same reduction.
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pv[i]) - static_cast<double>(tv[i]);
        acc += d * d;
    }
    const std::size_t ip = pred.id(), it = target.id();
    return pred.tape().record(Tensor<T>({1}, static_cast<T>(acc / static_cast<double>(n))), {ip, it},
                              [=](Tape<T>& t, std::size_t self) {
                                  const T scale = t.grad(self)[0] * T{2} / static_cast<T>(n);
                                  const auto& pv = t.value(ip);
                                  const auto& tv = t.value(it);
                                  if (t.requires_grad(ip)) {
                                      auto& gp = t.grad_buffer(ip);
                                      for (std::size_t i = 0; i < n; ++i) gp[i] += scale * (pv[i] - tv[i]);
                                  }
                                  if (t.requires_grad(it)) {
                                      auto& gt = t.grad_buffer(it);
                                      for (std::size_t i = 0; i < n; ++i) gt[i] -= scale * (pv[i] - tv[i]);
                                  }
                              });
}

#define FRAMEPRED_INSTANTIATE(T)                                                                   \
    template class ParameterSet<T>;                                                                \
    template class Tape<T>;                                                                        \
    template Var<T> add<T>(Var<T>, Var<T>);                                                        \
    template Var<T> mul<T>(Var<T>, Var<T>);                                                        \
    template Var<T> sum<T>(Var<T>);                                                                \
    template Var<T> reshape<T>(Var<T>, Shape);                                                     \
    template Var<T> relu<T>(Var<T>);                                                               \
    template Var<T> dense<T>(Var<T>, Var<T>, std::optional<Var<T>>);                               \
    template Var<T> conv2d<T>(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t, std::size_t);   \
    template Var<T> deconv2d<T>(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t, std::size_t); \
    template Var<T> concat_channels<T>(Var<T>, Var<T>);                                            \
    template Var<T> tile_action<T>(Var<T>, std::size_t, std::size_t);                              \
    template Var<T> linear_combine<T>(Var<T>, Var<T>);                                             \
    template Var<T> softmax_channels<T>(Var<T>);                                                   \
    template Var<T> mse_loss<T>(Var<T>, Var<T>);                                                   \
    template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> slice_channels<T>(const Tensor<T>&, std::size_t, std::size_t);

FRAMEPRED_INSTANTIATE(float)
FRAMEPRED_INSTANTIATE(double)

#undef FRAMEPRED_INSTANTIATE

}  // namespace framepred
