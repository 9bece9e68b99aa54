#pragma once

#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

#include "core/rng.hpp"

namespace mga {

// Dense row-major tensor of doubles. Training and tests share the same
// scalar type; checkpoints may down-convert on request.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0);
  static Tensor vec(std::vector<double> values);
  // 2-D tensor from nested initializer data
  static Tensor mat(std::vector<std::vector<double>> rows);

  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t numel() const { return data_.size(); }
  const std::vector<int>& shape() const { return shape_; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // 2-D accessors
  int rows() const { assert(ndim() == 2); return shape_[0]; }
  int cols() const { assert(ndim() == 2); return shape_[1]; }

  double& at(int i) { assert(ndim() == 1); return data_[static_cast<size_t>(i)]; }
  double at(int i) const { assert(ndim() == 1); return data_[static_cast<size_t>(i)]; }
  double& at(int i, int j) {
    assert(ndim() == 2);
    return data_[static_cast<size_t>(i) * shape_[1] + j];
  }
  double at(int i, int j) const {
    assert(ndim() == 2);
    return data_[static_cast<size_t>(i) * shape_[1] + j];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  Tensor row(int i) const;            // 1-D copy of row i of a matrix
  void set_row(int i, const Tensor& r);
  void add_row(int i, const Tensor& r, double factor = 1.0);

  void fill(double v);
  void add_inplace(const Tensor& o, double factor = 1.0);
  void scale_inplace(double s);
  double dot(const Tensor& o) const;
  double norm2() const;  // Euclidean norm
  double sum() const;

  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Throws NumericError if any entry is NaN/Inf; `op` names the caller.
void require_finite(const Tensor& t, const char* op);
// Throws DimensionError unless shapes match.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace mga
