#pragma once

#include <string>
#include <string_view>

#include "tensorcalc/autodiff.hpp"
#include "tensorcalc/eval.hpp"
#include "tensorcalc/expr.hpp"

namespace tensorcalc {

// DAG JSON: inputs, nodes in topological order and output ids. Field order
// is fixed and doubles print in shortest round-trip form.
std::string dag_to_json(const ExprDag& dag);
ExprDag dag_from_json(std::string_view text);

// DAG JSON plus {"derivative": {...}} and, when compressed, a
// {"compression": {core_id, trailing_id, sig, delta_pairs}} block.
std::string derivative_to_json(const DerivativeResult& result);
DerivativeResult derivative_from_json(std::string_view text);

// {"dims": [...], "data": [...]}
std::string tensor_to_json(const DenseTensor& t);
DenseTensor tensor_from_json(std::string_view text);

// "TCT1", u32 rank, rank x u64 dims, row-major little-endian f64 data.
std::string tensor_to_tct1(const DenseTensor& t);
DenseTensor tensor_from_tct1(std::string_view bytes);

// Reads a tensor file in either format (TCT1 detected by its magic).
DenseTensor load_tensor(const std::string& path);
void save_tensor(const std::string& path, const DenseTensor& t);

// {"X": {"dims": ..., "data": ...}, ...}
Environment environment_from_json(std::string_view text);
std::string environment_to_json(const Environment& env);

// Graphviz text. Nodes of order four or more are drawn in red.
std::string dag_to_dot(const ExprDag& dag, const std::string& title = "tensorcalc");

}  // namespace tensorcalc
