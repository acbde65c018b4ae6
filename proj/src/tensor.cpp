#include "gradleak/tensor.hpp"

#include <sstream>

#include "gradleak/autodiff.hpp"

namespace gradleak {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    Tensor t;
    int64_t n = shape_numel(shape);
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(n), value);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(data));
    return t;
}

std::span<const double> Tensor::data() const {
    if (!data_) return {};
    return {data_->data(), data_->size()};
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape_) + " is not a scalar");
    return (*data_)[0];
}

Tensor& Tensor::set_requires_grad(bool value) {
    requires_grad_ = value;
    if (value && !node_) {
        if (auto* tape = autodiff::GradTape::active(); tape && tape->recording())
            node_ = tape->emplace_leaf();
    }
    if (!value) node_.reset();
    return *this;
}

Tensor Tensor::detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
}

}  // namespace gradleak
