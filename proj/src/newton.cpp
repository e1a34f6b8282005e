#include "tensorcalc/newton.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "tensorcalc/error.hpp"

namespace tensorcalc {

LuSolver::LuSolver(std::vector<double> matrix, std::size_t n) : n_(n), lu_(std::move(matrix)), pivot_(n) {
  if (lu_.size() != n * n) throw Error(ErrorCode::DimMismatch, "LU needs a square matrix");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t best = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(lu_[r * n + col]) > std::abs(lu_[best * n + col])) best = r;
    }
    if (lu_[best * n + col] == 0.0) throw Error(ErrorCode::InvalidArgument, "singular matrix");
    pivot_[col] = best;
    if (best != col) std::swap_ranges(&lu_[col * n], &lu_[col * n] + n, &lu_[best * n]);
    const double d = lu_[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = (lu_[r * n + col] /= d);
      if (f == 0.0) continue;
      for (std::size_t c = col + 1; c < n; ++c) lu_[r * n + c] -= f * lu_[col * n + c];
    }
  }
}

void LuSolver::solve(std::span<double> b) const {
  if (b.size() != n_) throw Error(ErrorCode::DimMismatch, "right-hand side length differs from matrix size");
  for (std::size_t i = 0; i < n_; ++i) std::swap(b[i], b[pivot_[i]]);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < i; ++j) b[i] -= lu_[i * n_ + j] * b[j];
  }
  for (std::size_t i = n_; i-- > 0;) {
    for (std::size_t j = i + 1; j < n_; ++j) b[i] -= lu_[i * n_ + j] * b[j];
    b[i] /= lu_[i * n_ + i];
  }
}

DenseTensor solve_dense(const DenseTensor& hessian, const DenseTensor& rhs) {
  std::vector<std::int64_t> want = rhs.dims();
  want.insert(want.end(), rhs.dims().begin(), rhs.dims().end());
  if (hessian.dims() != want) throw Error(ErrorCode::DimMismatch, "Hessian dims must be rhs dims twice");
  const std::size_t n = rhs.size();
  LuSolver lu(std::vector<double>(hessian.data().begin(), hessian.data().end()), n);
  DenseTensor x = rhs;
  lu.solve(x.data());
  return x;
}

namespace {

// Enumerates mixed-radix counters over `dims`.
bool advance(std::vector<std::int64_t>& at, const std::vector<std::int64_t>& dims) {
  for (std::size_t i = at.size(); i-- > 0;) {
    if (++at[i] < dims[i]) return true;
    at[i] = 0;
  }
  return false;
}

}  // namespace

DenseTensor solve_compressed(const CompressionRecord& rec, const DenseTensor& core, const DenseTensor& rhs) {
  const std::size_t r = rhs.rank();
  if (rec.delta_pairs.empty()) throw Error(ErrorCode::InvalidArgument, "block solve needs a unit-tensor trailing factor");
  if (rec.full_labels.size() != 2 * r) throw Error(ErrorCode::DimMismatch, "compressed Hessian does not match rhs");
  if (core.rank() != rec.core_labels.size()) throw Error(ErrorCode::DimMismatch, "core tensor does not match record");
  const Labels rows(rec.full_labels.begin(), rec.full_labels.begin() + static_cast<std::ptrdiff_t>(r));
  const Labels cols(rec.full_labels.begin() + static_cast<std::ptrdiff_t>(r), rec.full_labels.end());

  // Split axis positions into unit-tensor pairs (block index) and the rest.
  std::vector<bool> paired(r, false);
  for (const auto& [a, b] : rec.delta_pairs) {
    auto pa = std::find(rows.begin(), rows.end(), a), pb = std::find(cols.begin(), cols.end(), b);
    if (pa == rows.end() || pb == cols.end()) {
      pa = std::find(rows.begin(), rows.end(), b);
      pb = std::find(cols.begin(), cols.end(), a);
    }
    if (pa == rows.end() || pb == cols.end() || pa - rows.begin() != pb - cols.begin()) {
      throw Error(ErrorCode::InvalidArgument, "unit tensor does not pair matching Hessian axes");
    }
    paired[static_cast<std::size_t>(pa - rows.begin())] = true;
  }
  std::vector<std::size_t> block_axes, inner_axes;
  std::vector<std::int64_t> block_dims, inner_dims;
  for (std::size_t q = 0; q < r; ++q) {
    (paired[q] ? block_axes : inner_axes).push_back(q);
    (paired[q] ? block_dims : inner_dims).push_back(rhs.dims()[q]);
  }

  // Each core axis reads either a row or a column position.
  struct CoreAxis {
    std::size_t pos;
    bool col;
  };
  std::vector<CoreAxis> core_axes;
  bool core_varies = false;
  for (const Label& l : rec.core_labels) {
    auto pr = std::find(rows.begin(), rows.end(), l);
    auto pc = std::find(cols.begin(), cols.end(), l);
    if (pr != rows.end()) {
      core_axes.push_back({static_cast<std::size_t>(pr - rows.begin()), false});
    } else if (pc != cols.end()) {
      core_axes.push_back({static_cast<std::size_t>(pc - cols.begin()), true});
    } else {
      throw Error(ErrorCode::InvalidArgument, "core label '" + l + "' is not a Hessian axis");
    }
    core_varies = core_varies || paired[core_axes.back().pos];
  }
  for (std::size_t q : inner_axes) {
    bool row = false, col = false;
    for (const auto& a : core_axes) (a.col ? col : row) = (a.col ? col : row) || a.pos == q;
    if (!row || !col) throw Error(ErrorCode::InvalidArgument, "compressed Hessian is singular along an axis");
  }

  std::int64_t m = 1;
  for (auto d : inner_dims) m *= d;
  const auto strides = rhs.strides();
  std::vector<std::int64_t> row_at(r, 0), col_at(r, 0);
  auto core_entry = [&]() {
    std::size_t off = 0;
    for (std::size_t i = 0; i < core_axes.size(); ++i) {
      const auto& a = core_axes[i];
      off = off * static_cast<std::size_t>(core.dims()[i]) + static_cast<std::size_t>((a.col ? col_at : row_at)[a.pos]);
    }
    return core.data()[off];
  };
  auto set_inner = [&](std::vector<std::int64_t>& at, const std::vector<std::int64_t>& digits) {
    for (std::size_t i = 0; i < inner_axes.size(); ++i) at[inner_axes[i]] = digits[i];
  };
  auto build = [&]() {
    std::vector<double> mat(static_cast<std::size_t>(m * m));
    std::vector<std::int64_t> ri(inner_axes.size(), 0);
    std::size_t k = 0;
    do {
      set_inner(row_at, ri);
      std::vector<std::int64_t> ci(inner_axes.size(), 0);
      do {
        set_inner(col_at, ci);
        mat[k++] = core_entry();
      } while (advance(ci, inner_dims));
    } while (advance(ri, inner_dims));
    return LuSolver(std::move(mat), static_cast<std::size_t>(m));
  };

  DenseTensor x(rhs.dims());
  std::optional<LuSolver> shared;
  std::vector<std::int64_t> bi(block_axes.size(), 0);
  std::vector<double> b(static_cast<std::size_t>(m));
  do {
    for (std::size_t i = 0; i < block_axes.size(); ++i) row_at[block_axes[i]] = col_at[block_axes[i]] = bi[i];
    std::optional<LuSolver> local;
    if (core_varies) {
      local.emplace(build());
    } else if (!shared) {
      shared.emplace(build());
    }
    const LuSolver& lu = core_varies ? *local : *shared;
    // Gather, solve and scatter this block of the right-hand side.
    std::vector<std::int64_t> ri(inner_axes.size(), 0);
    std::vector<std::size_t> offsets;
    offsets.reserve(b.size());
    do {
      set_inner(row_at, ri);
      std::size_t off = 0;
      for (std::size_t q = 0; q < r; ++q) off += static_cast<std::size_t>(row_at[q] * strides[q]);
      offsets.push_back(off);
    } while (advance(ri, inner_dims));
    for (std::size_t i = 0; i < offsets.size(); ++i) b[i] = rhs.data()[offsets[i]];
    lu.solve(b);
    for (std::size_t i = 0; i < offsets.size(); ++i) x.data()[offsets[i]] = b[i];
  } while (advance(bi, block_dims));
  return x;
}

}  // namespace tensorcalc
