#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdlab {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape & shape);
std::string shape_str(const Shape & shape);

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Dense row-major tensor of doubles.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    const Shape & shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const;
    std::size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double> & vec() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double & operator[](std::size_t i) { return data_[i]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_.back() + c]; }

    double item() const;
    bool all_finite() const;

  private:
    Shape shape_;
    std::vector<double> data_;
};

// Row-major boolean matrix; used for attention visibility.
struct BoolMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> cells;

    BoolMatrix() = default;
    BoolMatrix(int r, int c, bool fill = false) : rows(r), cols(c), cells(static_cast<std::size_t>(r) * c, fill) {}

    bool operator()(int r, int c) const { return cells[static_cast<std::size_t>(r) * cols + c] != 0; }
    void set(int r, int c, bool v) { cells[static_cast<std::size_t>(r) * cols + c] = v ? 1 : 0; }
    bool operator==(const BoolMatrix &) const = default;
};

// A named trainable tensor. The gradient buffer is owned by whoever trains it.
struct Parameter {
    std::string name;
    Tensor value;
};

}  // namespace mdlab
