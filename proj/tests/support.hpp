#pragma once

#include <random>

#include "tensorcalc/autodiff.hpp"
#include "tensorcalc/eval.hpp"
#include "tensorcalc/parser.hpp"
#include "tensorcalc/problems.hpp"

namespace tctest {

using namespace tensorcalc;

inline DenseTensor eval_result(const DerivativeResult& r, const Environment& env) {
  return evaluate(derivative_dag(r), env).outputs.at(0);
}

inline DenseTensor eval_output(const ExprDag& dag, const Environment& env, std::size_t i = 0) {
  return evaluate(dag, env).outputs.at(i);
}

inline DenseTensor tensor(std::vector<std::int64_t> dims, std::vector<double> data) {
  return DenseTensor(std::move(dims), std::move(data));
}

}  // namespace tctest
