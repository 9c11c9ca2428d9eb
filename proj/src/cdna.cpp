#include "framepred/cdna.hpp"

#include <algorithm>
#include <string>

namespace framepred::cdna {

namespace {

template <typename T>
Tensor<T> as_batched(const Tensor<T>& t) {
    if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
    if (t.rank() == 4) return t;
    throw ShapeError("expected (H,W,C) or (B,H,W,C), got " + to_string(t.shape()));
}

template <typename T>
Tensor<T> restore_rank(const Tensor<T>& t, std::size_t rank) {
    return rank == 3 ? t.reshaped({t.dim(1), t.dim(2), t.dim(3)}) : t;
}

}  // namespace

template <typename T>
Var<T> normalize_kernels(Var<T> raw) {
    const Shape s = raw.shape();
    if (s.size() != 3 || s[1] != s[2]) throw ShapeError("normalize_kernels: expected (m,k,k), got " + to_string(s));
    return reshape(softmax_channels(reshape(raw, {s[0], s[1] * s[2]})), s);
}

template <typename T>
Var<T> advect(Var<T> prev, Var<T> kernels) {
    const Shape ps = prev.shape();
    const Shape ks = kernels.shape();
    if (ps.size() != 4 || ps[3] != 1) throw ShapeError("advect: expected prev (B,H,W,1), got " + to_string(ps));
    if (ks.size() != 3 || ks[1] != ks[2]) throw ShapeError("advect: expected kernels (m,k,k), got " + to_string(ks));
    if (ks[1] % 2 == 0) throw std::invalid_argument("advect: kernel size " + std::to_string(ks[1]) + " is even");

    const std::ptrdiff_t batch = ps[0], h_n = ps[1], w_n = ps[2];
    const std::ptrdiff_t m = ks[0], k = ks[1], r = k / 2;
    auto clamp_h = [h_n](std::ptrdiff_t v) { return std::clamp<std::ptrdiff_t>(v, 0, h_n - 1); };
    auto clamp_w = [w_n](std::ptrdiff_t v) { return std::clamp<std::ptrdiff_t>(v, 0, w_n - 1); };

    const auto& x = prev.value();
    const auto& kv = kernels.value();
    Tensor<T> out({ps[0], ps[1], ps[2], ks[0]});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bh = 0; bh < batch * h_n; ++bh) {
        const std::ptrdiff_t b = bh / h_n, h = bh % h_n;
        for (std::ptrdiff_t w = 0; w < w_n; ++w) {
            for (std::ptrdiff_t j = 0; j < m; ++j) {
                T acc{0};
                for (std::ptrdiff_t u = 0; u < k; ++u) {
                    const std::ptrdiff_t sh = clamp_h(h + u - r);
                    for (std::ptrdiff_t v = 0; v < k; ++v) {
                        acc += kv[(j * k + u) * k + v] * x[(b * h_n + sh) * w_n + clamp_w(w + v - r)];
                    }
                }
                out[((b * h_n + h) * w_n + w) * m + j] = acc;
            }
        }
    }

    const std::size_t ip = prev.id(), ik = kernels.id();
    return prev.tape().record(std::move(out), {ip, ik}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& x = t.value(ip);
        const auto& kv = t.value(ik);
        const bool want_x = t.requires_grad(ip), want_k = t.requires_grad(ik);
        Tensor<T>* gx = want_x ? &t.grad_buffer(ip) : nullptr;
        Tensor<T>* gk = want_k ? &t.grad_buffer(ik) : nullptr;
        for (std::ptrdiff_t b = 0; b < batch; ++b)
            for (std::ptrdiff_t h = 0; h < h_n; ++h)
                for (std::ptrdiff_t w = 0; w < w_n; ++w)
                    for (std::ptrdiff_t j = 0; j < m; ++j) {
                        const T gv = g[((b * h_n + h) * w_n + w) * m + j];
                        for (std::ptrdiff_t u = 0; u < k; ++u) {
                            const std::ptrdiff_t sh = clamp_h(h + u - r);
                            for (std::ptrdiff_t v = 0; v < k; ++v) {
                                const std::size_t src = (b * h_n + sh) * w_n + clamp_w(w + v - r);
                                const std::size_t ki = (j * k + u) * k + v;
                                if (gx) (*gx)[src] += gv * kv[ki];
                                if (gk) (*gk)[ki] += gv * x[src];
                            }
                        }
                    }
    });
}

template <typename T>
Var<T> channel_dot(Var<T> a, Var<T> b) {
    require_same_shape(a.shape(), b.shape(), "channel_dot");
    const Shape s = a.shape();
    if (s.size() != 4) throw ShapeError("channel_dot: expected (B,H,W,C), got " + to_string(s));
    const std::size_t c = s[3], px = s[0] * s[1] * s[2];
    Tensor<T> out({s[0], s[1], s[2], 1});
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t p = 0; p < px; ++p) {
        T acc{0};
        for (std::size_t i = 0; i < c; ++i) acc += av[p * c + i] * bv[p * c + i];
        out[p] = acc;
    }
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        if (t.requires_grad(ia)) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t p = 0; p < px; ++p)
                for (std::size_t i = 0; i < c; ++i) ga[p * c + i] += g[p] * bv[p * c + i];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_buffer(ib);
            for (std::size_t p = 0; p < px; ++p)
                for (std::size_t i = 0; i < c; ++i) gb[p * c + i] += g[p] * av[p * c + i];
        }
    });
}

template <typename T>
Var<T> composite(Var<T> transformed, std::type_identity_t<std::optional<Var<T>>> current, Var<T> mask_logits) {
    const Shape ts = transformed.shape();
    if (ts.size() != 4) throw ShapeError("composite: expected transformed (B,H,W,m), got " + to_string(ts));
    const std::size_t sources = ts[3] + (current ? 1 : 0);
    const Shape& ms = mask_logits.shape();
    if (ms.size() != 4 || ms[0] != ts[0] || ms[1] != ts[1] || ms[2] != ts[2] || ms[3] != sources) {
        throw ShapeError("composite: mask logits " + to_string(ms) + " need " + std::to_string(sources) +
                         " channels for transformed " + to_string(ts) + (current ? " plus the current frame" : ""));
    }
    Var<T> all = transformed;
    if (current) {
        const Shape& cs = current->shape();
        if (cs != Shape{ts[0], ts[1], ts[2], 1}) {
            throw ShapeError("composite: current frame " + to_string(cs) + " does not match " + to_string(ts));
        }
        all = concat_channels(transformed, *current);
    }
    return channel_dot(softmax_channels(mask_logits), all);
}

template <typename T>
Tensor<T> normalize_kernels(const Tensor<T>& raw) {
    Tape<T> tape(false);
    return normalize_kernels(tape.view(raw)).value();
}

template <typename T>
Tensor<T> advect(const Tensor<T>& prev, const Tensor<T>& kernels) {
    Tape<T> tape(false);
    const std::size_t rank = prev.rank();
    return restore_rank(advect(tape.constant(as_batched(prev)), tape.view(kernels)).value(), rank);
}

template <typename T>
Tensor<T> composite(const Tensor<T>& transformed, const std::type_identity_t<Tensor<T>>* current, const Tensor<T>& mask_logits) {
    Tape<T> tape(false);
    const std::size_t rank = transformed.rank();
    std::optional<Var<T>> cur;
    if (current) cur = tape.constant(as_batched(*current));
    return restore_rank(
        composite(tape.constant(as_batched(transformed)), cur, tape.constant(as_batched(mask_logits))).value(), rank);
}

#define FRAMEPRED_INSTANTIATE(T)                                                              \
    template Var<T> normalize_kernels<T>(Var<T>);                                             \
    template Var<T> advect<T>(Var<T>, Var<T>);                                                \
    template Var<T> channel_dot<T>(Var<T>, Var<T>);                                           \
    template Var<T> composite<T>(Var<T>, std::optional<Var<T>>, Var<T>);                      \
    template Tensor<T> normalize_kernels<T>(const Tensor<T>&);                                \
    template Tensor<T> advect<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> composite<T>(const Tensor<T>&, const Tensor<T>*, const Tensor<T>&);

FRAMEPRED_INSTANTIATE(float)
FRAMEPRED_INSTANTIATE(double)

#undef FRAMEPRED_INSTANTIATE

}  // namespace framepred::cdna
