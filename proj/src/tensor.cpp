#include "hemodet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hemodet::nn {

Tensor::Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
  long n = numel(shape_);
  if (n < 0) throw std::invalid_argument("Tensor: negative shape");
  data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(n), 0.0);
}

Tensor Tensor::full(std::vector<long> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from(std::vector<long> shape, std::vector<double> values) {
  if (numel(shape) != static_cast<long>(values.size()))
    throw std::invalid_argument("Tensor::from: size mismatch");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_ ? std::make_shared<std::vector<double>>(*data_) : nullptr;
  return t;
}

Tensor Tensor::reshaped(std::vector<long> shape) const {
  if (numel(shape) != size())
    throw std::invalid_argument("reshaped: size mismatch " + shape_str());
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(double v) { std::fill(data_->begin(), data_->end(), v); }

void Tensor::add_(const Tensor& o) {
  assert(same_shape(o));
  double* a = data();
  const double* b = o.data();
  long n = size();
  for (long i = 0; i < n; ++i) a[i] += b[i];
}

void Tensor::add_scaled_(const Tensor& o, double s) {
  assert(same_shape(o));
  double* a = data();
  const double* b = o.data();
  long n = size();
  for (long i = 0; i < n; ++i) a[i] += s * b[i];
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : *data_) m = std::max(m, std::fabs(v));
  return m;
}

double Tensor::sum() const { return std::accumulate(data_->begin(), data_->end(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

}  // namespace hemodet::nn
