#include "core/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "core/errors.hpp"

namespace mga {

namespace {
size_t checked_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("tensor dimension must be non-negative");
    n *= static_cast<size_t>(d);
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != data_.size())
    throw DimensionError("tensor data length does not match shape " + shape_str());
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = rng.normal() * stddev;
  return t;
}

Tensor Tensor::vec(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::mat(std::vector<std::vector<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(r) * c);
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c)
      throw DimensionError("Tensor::mat: ragged rows");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(flat));
}

Tensor Tensor::row(int i) const {
  assert(ndim() == 2);
  const int c = cols();
  std::vector<double> out(data_.begin() + static_cast<size_t>(i) * c,
                          data_.begin() + static_cast<size_t>(i + 1) * c);
  return Tensor({c}, std::move(out));
}

void Tensor::set_row(int i, const Tensor& r) {
  assert(ndim() == 2 && r.ndim() == 1 && r.dim(0) == cols());
  std::copy(r.data_.begin(), r.data_.end(), data_.begin() + static_cast<size_t>(i) * cols());
}

void Tensor::add_row(int i, const Tensor& r, double factor) {
  assert(ndim() == 2 && r.ndim() == 1 && r.dim(0) == cols());
  double* dst = data_.data() + static_cast<size_t>(i) * cols();
  for (int j = 0; j < cols(); ++j) dst[j] += factor * r.data_[static_cast<size_t>(j)];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_inplace(const Tensor& o, double factor) {
  require_same_shape(*this, o, "add_inplace");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += factor * o.data_[i];
}

void Tensor::scale_inplace(double s) {
  for (auto& v : data_) v *= s;
}

double Tensor::dot(const Tensor& o) const {
  require_same_shape(*this, o, "dot");
  double acc = 0.0;
  for (size_t i = 0; i < data_.size(); ++i) acc += data_[i] * o.data_[i];
  return acc;
}

double Tensor::norm2() const { return std::sqrt(dot(*this)); }

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw NumericError(std::string(op) + ": input contains NaN or Inf");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
}

}  // namespace mga
