#pragma once

#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "tensorcalc/expr.hpp"

namespace tensorcalc {

// A multi-factor einsum: coefficient * sum over non-output labels of the
// product of all factors. Einsum trees flatten into this form (associativity
// with fresh inner labels) and are rebuilt as binary einsums.
struct Factor {
  NodeId node = 0;
  Labels labels;  // positional labels of node's axes
};

struct DeltaPair {
  Label left;
  Label right;
};

struct Product {
  double coefficient = 1.0;
  bool zero = false;
  std::vector<Factor> factors;  // non-delta, non-constant factors, chain order
  std::vector<DeltaPair> deltas;
  Labels broadcast;  // output labels carried only by constant factors
  Labels output;
  std::map<Label, std::int64_t> dims;

  Labels factor_labels(std::size_t skip = static_cast<std::size_t>(-1)) const;
};

enum class ContractionOrder {
  LeftToRight,
  IncreasingOrder,  // adjacent pair with the lowest-rank intermediate first
};

// Flattens the einsum at `root`. Child einsums are inlined when `inline_child`
// returns true for them; every other child becomes a factor (mapped through
// `map_leaf`). Constants are folded into the coefficient, unit tensors
// become delta pairs.
Product flatten_product(ExprDag& dag, NodeId root, const std::function<bool(NodeId)>& inline_child,
                        const std::function<NodeId(NodeId)>& map_leaf);

// Removes every delta pair with a summed label by substitution. Returns true
// when at least one pair survives (both labels are output labels).
bool eliminate_deltas(Product& product);

// Rebuilds binary einsums for `product`; surviving unit tensors are
// multiplied last.
NodeId rebuild_product(ExprDag& dag, const Product& product, ContractionOrder order);

// Gives `id` the result labels `target` (same rank and extents). Einsum and
// Delta roots are rebuilt with renamed labels; anything else is wrapped in a
// relabelling einsum.
NodeId relabel_root(ExprDag& dag, NodeId id, const Labels& target);

}  // namespace tensorcalc
