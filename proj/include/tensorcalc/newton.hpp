#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tensorcalc/autodiff.hpp"
#include "tensorcalc/tensor.hpp"

namespace tensorcalc {

// LU factorization with partial pivoting of a dense n x n row-major matrix.
class LuSolver {
 public:
  LuSolver(std::vector<double> matrix, std::size_t n);

  // Overwrites `rhs` (length n) with the solution.
  void solve(std::span<double> rhs) const;
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::vector<double> lu_;
  std::vector<std::size_t> pivot_;
};

// Solves H x = g where H has dims g.dims ++ g.dims (a Hessian of a scalar).
DenseTensor solve_dense(const DenseTensor& hessian, const DenseTensor& rhs);

// Solves the same system from a compressed Hessian: the trailing unit tensor
// makes H block diagonal over its paired labels, so only the core-sized
// blocks are factored (once, when the core does not vary across blocks).
// `core` is the evaluated core tensor over record.core_labels.
DenseTensor solve_compressed(const CompressionRecord& record, const DenseTensor& core, const DenseTensor& rhs);

}  // namespace tensorcalc
