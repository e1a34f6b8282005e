#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tensorcalc/expr.hpp"
#include "tensorcalc/tensor.hpp"

namespace tensorcalc {

using Environment = std::map<std::string, DenseTensor>;

struct NodeFlops {
  NodeId id = 0;
  std::int64_t multiplies = 0;
  std::int64_t adds = 0;
  std::int64_t unary = 0;
};

// Deterministic operation counts. For an einsum over s1,s2 -> s3:
//   multiplies = prod dims(s1 u s2)
//   adds       = prod dims(s1 u s2) - prod dims(s3)
// Additions cost one add per entry; unary functions cost
// `cost_per_entry` per entry and are tallied separately.
struct FlopReport {
  std::int64_t multiplies = 0;
  std::int64_t adds = 0;
  std::int64_t unary = 0;
  std::vector<NodeFlops> per_node;

  std::int64_t total() const { return multiplies + adds + unary; }
};

NodeFlops node_flops(const ExprDag& dag, NodeId id);
FlopReport count_flops(const ExprDag& dag);

struct EvalOptions {
  // Use the transpose-and-multiply kernel instead of the literal nested sum.
  bool optimized = false;
};

struct Evaluation {
  std::vector<DenseTensor> outputs;
  FlopReport flops;
};

Evaluation evaluate(const ExprDag& dag, const Environment& env, EvalOptions options = {});
DenseTensor evaluate_node(const ExprDag& dag, NodeId id, const Environment& env, EvalOptions options = {});

// C[s3] = sum over (s1 u s2) \ s3 of A[s1] * B[s2]. Summation runs
// lexicographically over the summed labels in s1 u s2 order, innermost last.
DenseTensor einsum_reference(const DenseTensor& a, const Labels& s1, const DenseTensor& b, const Labels& s2,
                             const Labels& s3);
DenseTensor einsum_optimized(const DenseTensor& a, const Labels& s1, const DenseTensor& b, const Labels& s2,
                             const Labels& s3);

DenseTensor delta_tensor(const std::vector<std::int64_t>& pair_dims);

// D o h = D *_(s1s2, s2, s1) h: contracts the trailing axes of D with h.
DenseTensor inner_product(const DenseTensor& d, const DenseTensor& h);

// Central differences of output `output` w.r.t. variable `wrt`:
// entry (s_y, s_x) = (f(x + h e) - f(x - h e))[s_y] / 2h.
DenseTensor finite_difference(const ExprDag& dag, std::size_t output, const std::string& wrt,
                              const Environment& env, double h = 1e-5);

// Second-order central differences, shape s_y s_x s_x.
DenseTensor finite_difference2(const ExprDag& dag, std::size_t output, const std::string& wrt,
                               const Environment& env, double h = 1e-3);

void check_environment(const ExprDag& dag, const Environment& env);

}  // namespace tensorcalc
