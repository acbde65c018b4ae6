#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradleak {

using Shape = std::vector<int64_t>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape-mismatch error naming the op and the offending dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A primitive produced NaN/Inf on finite inputs (overflow, division by zero, ...).
class NonFiniteError : public Error {
public:
    using Error::Error;
};

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace autodiff {
struct Node;
}

/// Dense f64 tensor, row-major, value-semantic. Copies share the immutable
/// data buffer; every operation allocates a fresh result. A tensor optionally
/// carries a node reference into the active derivative graph.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value) { return full({}, value); }
    static Tensor from_data(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    bool defined() const { return data_ != nullptr; }

    std::span<const double> data() const;
    double operator[](int64_t flat_index) const { return (*data_)[static_cast<size_t>(flat_index)]; }
    /// Value of a one-element tensor.
    double item() const;

    bool requires_grad() const { return requires_grad_; }
    /// Marks this tensor as a differentiation leaf. Registers it on the
    /// active tape when one is open; without a tape the flag is inert.
    Tensor& set_requires_grad(bool value);

    const std::shared_ptr<autodiff::Node>& node() const { return node_; }
    void set_node(std::shared_ptr<autodiff::Node> node) { node_ = std::move(node); }

    /// Same values, no graph participation.
    Tensor detached() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<autodiff::Node> node_;
    bool requires_grad_ = false;
};

/// A named parameter or gradient entry; ordering of a vector of these is
/// load-bearing (front-to-back layer order defines the Q schedule index).
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

}  // namespace gradleak
