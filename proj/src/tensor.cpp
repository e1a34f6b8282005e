#include "tensorcalc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tensorcalc/error.hpp"

namespace tensorcalc {

std::int64_t element_count(std::span<const std::int64_t> dims) {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

DenseTensor::DenseTensor(std::vector<std::int64_t> dims, double fill)
    : dims_(std::move(dims)), data_(static_cast<std::size_t>(element_count(dims_)), fill) {
  for (auto d : dims_) {
    if (d < 1) throw Error(ErrorCode::DimMismatch, "tensor extents must be positive");
  }
}

DenseTensor::DenseTensor(std::vector<std::int64_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  for (auto d : dims_) {
    if (d < 1) throw Error(ErrorCode::DimMismatch, "tensor extents must be positive");
  }
  if (static_cast<std::int64_t>(data_.size()) != element_count(dims_)) {
    throw Error(ErrorCode::DimMismatch, "tensor data length " + std::to_string(data_.size()) +
                                            " does not match extents");
  }
}

std::vector<std::int64_t> DenseTensor::strides() const {
  std::vector<std::int64_t> s(dims_.size(), 1);
  for (std::size_t i = dims_.size(); i-- > 1;) s[i - 1] = s[i] * dims_[i];
  return s;
}

double& DenseTensor::at(std::initializer_list<std::int64_t> index) {
  auto s = strides();
  std::size_t k = 0, flat = 0;
  for (auto i : index) flat += static_cast<std::size_t>(i * s[k++]);
  return data_[flat];
}

double DenseTensor::at(std::initializer_list<std::int64_t> index) const {
  auto s = strides();
  std::size_t k = 0, flat = 0;
  for (auto i : index) flat += static_cast<std::size_t>(i * s[k++]);
  return data_[flat];
}

double tensor_norm(const DenseTensor& t) {
  double sum = 0.0;
  for (double v : t.data()) sum += v * v;
  return std::sqrt(sum);
}

double max_rel_diff(const DenseTensor& a, const DenseTensor& b) {
  if (a.dims() != b.dims()) throw Error(ErrorCode::DimMismatch, "cannot compare tensors of different shape");
  double diff = 0.0, scale = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

bool bit_identical(const DenseTensor& a, const DenseTensor& b) {
  return a.dims() == b.dims() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace tensorcalc
