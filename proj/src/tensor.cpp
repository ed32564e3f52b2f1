#include "mdlab/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mdlab {

std::size_t shape_numel(const Shape & shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) {
            throw ShapeError("negative dimension in shape " + shape_str(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape & shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
    }
}

int Tensor::dim(int i) const {
    if (i < 0) {
        i += rank();
    }
    if (i < 0 || i >= rank()) {
        throw ShapeError("dimension index out of range for shape " + shape_str(shape_));
    }
    return shape_[i];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

}  // namespace mdlab
