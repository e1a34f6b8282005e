#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tensorcalc/eval.hpp"
#include "tensorcalc/expr.hpp"

namespace tensorcalc {

// A benchmark objective with random data. `params` lists the variables the
// derivatives are taken with respect to.
struct Problem {
  std::string kind;
  ExprDag dag;
  Environment env;
  std::vector<std::string> params;
  std::int64_t n = 0;
  std::int64_t k = 0;
};

DenseTensor random_normal(const std::vector<std::int64_t>& dims, std::mt19937_64& rng);

// sum_i log(exp(-y_i (X w)_i) + 1) with X: m x n, m = 2n, labels y = +-1.
Problem make_logreg(std::int64_t n, std::uint64_t seed);

// ||T - U V'||^2 over n x n data with rank k factors; `masked` restricts the
// sum to a Bernoulli(0.5) indicator matrix.
Problem make_matfac(std::int64_t n, std::int64_t k, bool masked, std::uint64_t seed);

// Single-sample cross-entropy of a bias-free ReLU network with `layers`
// square weight matrices of size `width`, softmax output and one-hot label.
// Pre-activations are kept at least 0.05 away from the ReLU kink.
Problem make_nn(std::int64_t layers, std::int64_t width, std::uint64_t seed);

Problem make_problem(const std::string& kind, std::int64_t n, std::int64_t k, std::int64_t layers,
                     std::uint64_t seed);

}  // namespace tensorcalc
