#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Tape records every op executed through it. Ops are free functions taking
// and returning Var handles; each op computes its value eagerly and, when the
// tape records gradients, stores a closure that propagates the output
// gradient to its inputs. Tape::backward walks the record once, newest first.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <type_traits>
#include <string>
#include <string_view>
#include <vector>

#include "framepred/tensor.hpp"

namespace framepred {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
};

/// Named trainable tensors of one model. Names are unique; insertion order is
/// the serialization order.
template <typename T>
class ParameterSet {
   public:
    Parameter<T>& add(std::string name, Tensor<T> value);

    Parameter<T>& get(std::string_view name);
    const Parameter<T>& get(std::string_view name) const;
    Parameter<T>* find(std::string_view name);
    const Parameter<T>* find(std::string_view name) const;

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t element_count() const;
    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    Parameter<T>& operator[](std::size_t i) { return params_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

   private:
    std::deque<Parameter<T>> params_;
};

template <typename T>
class Tape;

template <typename T>
class Var {
   public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape<T>& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor<T>& value() const;
    const Tensor<T>& grad() const;
    const Shape& shape() const { return value().shape(); }

   private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

template <typename T>
class Tape {
   public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool records_gradients() const noexcept { return record_; }

    /// Leaf that never receives a gradient.
    Var<T> constant(Tensor<T> value);
    /// Leaf whose gradient is kept on the tape (inputs under test).
    Var<T> input(Tensor<T> value);
    /// Leaf viewing p.value; backward accumulates into p.grad.
    Var<T> parameter(Parameter<T>& p);
    /// Leaf viewing an external tensor without copying and without gradient.
    /// The tensor must outlive the tape.
    Var<T> view(const Tensor<T>& value);

    /// Appends an op result. `backward` is dropped when the tape does not
    /// record gradients or no input requires one.
    Var<T> record(Tensor<T> value, std::initializer_list<std::size_t> inputs, Backward backward);

    const Tensor<T>& value(std::size_t id) const;
    /// Empty tensor when no gradient reached the node.
    const Tensor<T>& grad(std::size_t id) const {
        const Node& n = nodes_.at(id);
        return n.param ? n.param->grad : n.grad;
    }
    /// Zero-initialized on first access.
    Tensor<T>& grad_buffer(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold exactly one
    /// element.
    void backward(Var<T> loss);

    std::size_t size() const noexcept { return nodes_.size(); }
    /// Node ids whose backward closure ran during the last backward(), in order.
    const std::vector<std::size_t>& last_backward_order() const noexcept { return visited_; }

   private:
    struct Node {
        Tensor<T> owned;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        bool requires_grad = false;
        Parameter<T>* param = nullptr;
        Backward backward;
    };

    bool record_;
    std::deque<Node> nodes_;
    std::vector<std::size_t> visited_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape_->value(id_);
}

template <typename T>
const Tensor<T>& Var<T>::grad() const {
    return tape_->grad(id_);
}

// Ops. All image-like tensors are (B,H,W,C).

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
/// Sum of all elements, shape (1).
template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
template <typename T>
Var<T> relu(Var<T> a);

/// x (B,In) times w (In,Out) plus optional bias (Out).
template <typename T>
Var<T> dense(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias);

/// Weights (k,k,Cin,Cout). Output spatial size floor((H+2p-k)/s)+1.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride, std::size_t padding);

/// Transposed convolution; the adjoint of conv2d with the same weight tensor.
/// Weights (k,k,Cout,Cin). Output spatial size (H-1)s-2p+k.
template <typename T>
Var<T> deconv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride,
                std::size_t padding);

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);

/// action (B,A) -> (B,height,width,A), each plane spatially constant.
template <typename T>
Var<T> tile_action(Var<T> action, std::size_t height, std::size_t width);

/// basis (B,H,W,n) and weights (n) -> (B,H,W,1), no bias.
template <typename T>
Var<T> linear_combine(Var<T> basis, Var<T> weights);

/// Softmax over the last axis, max-subtracted.
template <typename T>
Var<T> softmax_channels(Var<T> a);

/// Mean of squared differences over all elements, shape (1).
template <typename T>
Var<T> mse_loss(Var<T> pred, Var<T> target);

// Tensor-level helpers shared by models and tests.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t end);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace framepred
