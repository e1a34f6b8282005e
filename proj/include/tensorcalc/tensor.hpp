#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tensorcalc {

// Dense row-major tensor of doubles. Rank 0 holds exactly one value.
class DenseTensor {
 public:
  DenseTensor() : data_(1, 0.0) {}
  explicit DenseTensor(std::vector<std::int64_t> dims, double fill = 0.0);
  DenseTensor(std::vector<std::int64_t> dims, std::vector<double> data);

  static DenseTensor scalar(double value) { return DenseTensor({}, std::vector<double>{value}); }

  std::size_t rank() const { return dims_.size(); }
  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  double& at(std::initializer_list<std::int64_t> index);
  double at(std::initializer_list<std::int64_t> index) const;

  std::vector<std::int64_t> strides() const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  std::vector<std::int64_t> dims_;
  std::vector<double> data_;
};

std::int64_t element_count(std::span<const std::int64_t> dims);

// sqrt of the sum of squared entries; Euclidean for vectors, Frobenius for
// matrices, absolute value for scalars.
double tensor_norm(const DenseTensor& t);

// max |a - b| / max(1, max |b|). Shapes must agree.
double max_rel_diff(const DenseTensor& a, const DenseTensor& b);

// Bit-level equality, distinguishing -0.0 and NaN payloads.
bool bit_identical(const DenseTensor& a, const DenseTensor& b);

}  // namespace tensorcalc
