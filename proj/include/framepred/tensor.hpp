#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace framepred {

/// Raised for any shape or length disagreement between operands. The message
/// always names the offending shapes.
class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array. Rank is at most 4; image tensors are laid out as
/// (batch, height, width, channels).
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& vector() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Element of a rank-4 (b, h, w, c) tensor.
    T& at(std::size_t b, std::size_t h, std::size_t w, std::size_t c) {
        return data_[((b * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
    }
    const T& at(std::size_t b, std::size_t h, std::size_t w, std::size_t c) const {
        return data_[((b * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
    }

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

   private:
    Shape shape_;
    std::vector<T> data_;
};

/// Throws ShapeError naming both shapes unless they are equal.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace framepred
