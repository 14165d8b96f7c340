#pragma once

#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cao::nn {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline std::string shape_string(const std::vector<Index>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

/// Dense n-dimensional array, row-major.
template <typename Scalar = double>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Vector<Scalar>::Constant(count(shape_), fill)) {}

  Tensor(std::vector<Index> shape, Vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + nn::shape_string(shape_));
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return data_.size(); }

  Vector<Scalar>& values() { return data_; }
  const Vector<Scalar>& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  template <typename... I>
  Scalar& operator()(I... idx) { return data_[offset(idx...)]; }
  template <typename... I>
  Scalar operator()(I... idx) const { return data_[offset(idx...)]; }

  /// Row-major view as rows x cols; rows * cols must equal size().
  Eigen::Map<RowMatrix<Scalar>> matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return {data_.data(), rows, cols};
  }
  Eigen::Map<const RowMatrix<Scalar>> matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return {data_.data(), rows, cols};
  }

  void set_zero() { data_.setZero(); }
  bool all_finite() const { return data_.allFinite(); }
  std::string shape_string() const { return nn::shape_string(shape_); }

  static Index count(const std::vector<Index>& shape) {
    for (Index d : shape)
      if (d < 0) throw std::invalid_argument("negative tensor dimension in " + nn::shape_string(shape));
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  }

 private:
  template <typename... I>
  Index offset(I... idx) const {
    const Index ids[] = {static_cast<Index>(idx)...};
    Index off = 0;
    for (std::size_t k = 0; k < sizeof...(I); ++k) off = off * shape_[k] + ids[k];
    return off;
  }

  void check_view(Index rows, Index cols) const {
    if (rows * cols != data_.size())
      throw std::invalid_argument("cannot view tensor " + shape_string() + " as " + std::to_string(rows) +
                                  "x" + std::to_string(cols));
  }

  std::vector<Index> shape_;
  Vector<Scalar> data_;
};

/// A named trainable value with its accumulated gradient (or a buffer, whose
/// gradient stays empty).
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<Index> shape, Scalar fill = Scalar(0), bool trainable = true)
      : name(std::move(n)), value(shape, fill), grad(trainable ? Tensor<Scalar>(shape) : Tensor<Scalar>()) {}
};

}  // namespace cao::nn
