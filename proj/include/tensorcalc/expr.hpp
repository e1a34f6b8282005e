#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensorcalc/error.hpp"
#include "tensorcalc/index.hpp"
#include "tensorcalc/tensor.hpp"

namespace tensorcalc {

using NodeId = std::uint32_t;

enum class NodeKind : std::uint8_t {
  Variable,
  ConstScalar,  // constant-filled tensor; rank 0 is a plain scalar
  ConstTensor,
  Delta,
  Add,
  Einsum,
  ElemUnary,
  GenUnary,
};

const char* kind_name(NodeKind kind);
std::optional<NodeKind> kind_from_name(std::string_view name);

// One DAG vertex. Einsum operands are labeled positionally: s1 names the
// axes of children[0], s2 those of children[1], s3 is the result. Delta
// pairs s1[k] with s2[k]. GenUnary stores domain (s1) and range (s2).
struct Node {
  NodeKind kind = NodeKind::ConstScalar;
  IndexSet index_set;
  std::vector<NodeId> children;
  std::string name;  // variable name or unary op name
  double value = 0.0;
  std::shared_ptr<const DenseTensor> tensor;
  IndexSet s1, s2, s3;

  std::size_t order() const { return index_set.rank(); }
};

class ExprDag;

// Built-in and user-registered unary functions. Elementwise entries carry a
// scalar function and a builder for f'(A) (same index set as A); general
// entries carry a tensor function and a builder for f'(A) over range++domain.
struct UnaryOp {
  enum class Kind { Elementwise, General };
  Kind kind = Kind::Elementwise;
  std::function<double(double)> scalar;
  std::function<DenseTensor(const DenseTensor&)> tensor_fn;
  // Returns nullopt when the derivative is identically zero.
  std::function<std::optional<NodeId>(ExprDag&, NodeId)> elem_derivative;
  std::function<std::optional<NodeId>(ExprDag&, NodeId, const Labels& range, const Labels& domain)>
      general_derivative;
  // Evaluation cost per output entry, for the FLOP report.
  std::int64_t cost_per_entry = 1;
};

class UnaryOpRegistry {
 public:
  static UnaryOpRegistry& instance();

  const UnaryOp* find(const std::string& name) const;
  const UnaryOp& at(const std::string& name) const;
  void add(const std::string& name, UnaryOp op);
  std::vector<std::string> names() const;

 private:
  UnaryOpRegistry();
  std::map<std::string, UnaryOp> ops_;
};

// Hash-consed expression DAG. Nodes are appended after their children, so
// id order is a topological order. Value type: copies are independent.
class ExprDag {
 public:
  // Leaves.
  NodeId variable(const std::string& name, const IndexSet& index_set);
  // Registers an input without creating its node.
  void declare_input(const std::string& name, const IndexSet& index_set);
  NodeId scalar(double value);
  NodeId fill(double value, const IndexSet& index_set);
  NodeId zeros(const IndexSet& index_set) { return fill(0.0, index_set); }
  NodeId tensor(const IndexSet& index_set, DenseTensor value);
  NodeId delta(const IndexSet& left, const IndexSet& right);

  // Interior nodes.
  NodeId add(NodeId left, NodeId right);
  NodeId einsum(NodeId left, const Labels& s1, NodeId right, const Labels& s2, const Labels& s3);
  NodeId elem_unary(const std::string& op, NodeId child);
  NodeId gen_unary(const std::string& op, NodeId child);
  NodeId gen_unary(const std::string& op, NodeId child, const Labels& range);

  // Convenience builders used by the differentiators and the parser.
  NodeId scale(double factor, NodeId child);
  NodeId negate(NodeId child) { return scale(-1.0, child); }
  NodeId subtract(NodeId left, NodeId right) { return add(left, negate(right)); }
  // Positional relabel (and permutation) of a node's axes to `to`.
  NodeId relabel(NodeId child, const Labels& from, const Labels& to);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t store_size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  const std::vector<NodeId>& outputs() const { return outputs_; }
  void add_output(NodeId id);
  void set_outputs(std::vector<NodeId> outputs);

  // Variable names in declaration order with their index sets.
  const std::vector<std::string>& input_names() const { return input_order_; }
  const IndexSet& input_index_set(const std::string& name) const;
  bool has_input(const std::string& name) const { return inputs_.count(name) != 0; }

  // Node ids reachable from the outputs (or `roots`), ascending (= topological).
  std::vector<NodeId> reachable() const;
  std::vector<NodeId> reachable_from(const std::vector<NodeId>& roots) const;
  std::size_t node_count() const { return reachable().size(); }

  // Number of reachable parents per node (outputs count as one use).
  std::vector<std::uint32_t> use_counts() const;

  // Structural identity of the reachable graph (ids, kinds, labels, outputs).
  // Labels local to interior nodes are compared up to renaming.
  std::string fingerprint() const;

  // A DAG holding only the nodes reachable from the outputs.
  ExprDag compact() const;

  // Copies the subgraph below `id` of `other` into this DAG.
  NodeId import(const ExprDag& other, NodeId id);
  NodeId import(const ExprDag& other, NodeId id, std::unordered_map<NodeId, NodeId>& memo);

  Index fresh_index(std::int64_t dim);
  Label fresh_label();
  bool uses_label(const Label& label) const { return used_labels_.count(label) != 0; }

  // Node with every label in `mapping` renamed throughout its subgraph.
  NodeId rename_indices(NodeId id, const std::map<Label, Label>& mapping);

 private:
  NodeId intern(Node node);
  static std::string key_of(const Node& node);
  void note_labels(const Node& node);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> table_;
  std::vector<NodeId> outputs_;
  std::map<std::string, IndexSet> inputs_;
  std::vector<std::string> input_order_;
  std::set<Label> used_labels_;
  std::uint64_t fresh_counter_ = 0;
};

// Spec-shaped constructor: checks children's index dims against s1/s2.
NodeId make_einsum(ExprDag& dag, NodeId left, const IndexSet& s1, NodeId right, const IndexSet& s2,
                   const IndexSet& s3);

// Result index set of a node, with extents resolved.
IndexSet infer_shape(const ExprDag& dag, NodeId id);

// Helpers for the zero / unit recognisers used across modules.
bool is_zero_const(const Node& node);
bool is_fill(const Node& node, double value);

}  // namespace tensorcalc
