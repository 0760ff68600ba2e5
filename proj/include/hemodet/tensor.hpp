#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hemodet::nn {

/// Dense row-major tensor of doubles. Copies are shallow (shared storage);
/// use clone() for an independent buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape);

  static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<long> shape, double v);
  static Tensor scalar(double v);
  static Tensor from(std::vector<long> shape, std::vector<double> values);

  bool defined() const { return data_ != nullptr; }
  long size() const { return data_ ? static_cast<long>(data_->size()) : 0; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  const std::vector<long>& shape() const { return shape_; }
  long dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  double& operator[](long i) { return (*data_)[static_cast<size_t>(i)]; }
  double operator[](long i) const { return (*data_)[static_cast<size_t>(i)]; }

  double& at(long i, long j) { return (*data_)[static_cast<size_t>(i * shape_[1] + j)]; }
  double at(long i, long j) const { return (*data_)[static_cast<size_t>(i * shape_[1] + j)]; }
  double& at(long c, long i, long j) {
    return (*data_)[static_cast<size_t>((c * shape_[1] + i) * shape_[2] + j)];
  }
  double at(long c, long i, long j) const {
    return (*data_)[static_cast<size_t>((c * shape_[1] + i) * shape_[2] + j)];
  }

  Tensor clone() const;
  /// Shares storage; total size must match.
  Tensor reshaped(std::vector<long> shape) const;

  void fill(double v);
  void add_(const Tensor& o);            // in-place accumulate, same shape
  void add_scaled_(const Tensor& o, double s);
  double abs_max() const;
  double sum() const;
  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::vector<long> shape_;
  std::shared_ptr<std::vector<double>> data_;
};

inline long numel(const std::vector<long>& shape) {
  long n = 1;
  for (long d : shape) n *= d;
  return n;
}

}  // namespace hemodet::nn
