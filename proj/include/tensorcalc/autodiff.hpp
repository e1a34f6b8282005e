#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tensorcalc/expr.hpp"

namespace tensorcalc {

enum class DiffMode { Forward, Reverse, Cross };

const char* mode_name(DiffMode mode);
DiffMode mode_from_name(const std::string& name);

// A derivative stored as core *_(core_labels, trailing_labels, full_labels)
// trailing. The trailing factor is the surviving unit tensor, or for
// outer-product Hessians the low-order factor that completes the product.
struct CompressionRecord {
  NodeId core = 0;
  Labels core_labels;
  NodeId trailing = 0;
  Labels trailing_labels;
  Labels full_labels;
  std::vector<std::pair<Label, Label>> delta_pairs;  // empty unless trailing is a Delta
};

// `dag` holds the derivative as outputs()[0]. With compression the outputs
// are {core, trailing}; expand() restores the full expression.
struct DerivativeResult {
  ExprDag dag;
  NodeId expr = 0;
  std::string wrt;
  std::size_t output = 0;
  int order = 1;
  std::optional<CompressionRecord> compression;

  const IndexSet& index_set() const { return dag.node(expr).index_set; }
};

// Derivatives of every output with respect to `wrt`, keyed by output position.
std::map<std::size_t, DerivativeResult> forward_diff(const ExprDag& dag, const std::string& wrt);

// Derivatives of output `output` with respect to every input variable.
std::map<std::string, DerivativeResult> reverse_diff(const ExprDag& dag, std::size_t output);

// Reverse-mode pullbacks whose einsum chains are re-multiplied in order of
// increasing intermediate tensor order.
DerivativeResult cross_country_diff(const ExprDag& dag, std::size_t output, const std::string& wrt);

DerivativeResult differentiate(const ExprDag& dag, std::size_t output, const std::string& wrt, DiffMode mode);

// k-fold differentiation; `modes` gives one mode per level (an empty list
// means reverse first, then cross-country).
DerivativeResult higher_order(const ExprDag& dag, std::size_t output, const std::string& wrt, int order,
                              std::vector<DiffMode> modes = {});

DerivativeResult compress(const DerivativeResult& result);
DerivativeResult expand(const DerivativeResult& result);
NodeId expand(ExprDag& dag, const CompressionRecord& record);

// The DAG of a derivative without its compression: outputs = {expr}.
ExprDag derivative_dag(const DerivativeResult& result);

}  // namespace tensorcalc
