#include "framepred/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace framepred {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                         to_string(b));
    }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {
    if (shape_.size() > 4) throw ShapeError("tensor rank above 4: " + to_string(shape_));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.size() > 4) throw ShapeError("tensor rank above 4: " + to_string(shape_));
    if (numel(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + to_string(shape_));
    }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor<T>(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace framepred
