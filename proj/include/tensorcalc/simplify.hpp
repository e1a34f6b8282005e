#pragma once

#include "tensorcalc/expr.hpp"

namespace tensorcalc {

// Rewrites to a fixpoint: additive zeros, zero products, constant folding,
// scalar-coefficient merging, identity relabels and unit-tensor elimination.
// Preserves evaluation, output index sets and never grows the node count.
ExprDag simplify(const ExprDag& dag);

struct DeltaContraction {
  NodeId node = 0;
  // A unit tensor survived because both of its paired labels reach the
  // output; the result is a candidate for compression.
  bool compressible = false;
};

// Eliminates the unit-tensor operand of an einsum by index substitution
// where a paired label is summed over.
DeltaContraction delta_contract(ExprDag& dag, NodeId einsum_node);

}  // namespace tensorcalc
