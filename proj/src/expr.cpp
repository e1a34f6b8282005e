#include "tensorcalc/expr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>

namespace tensorcalc {

namespace {

constexpr const char* kKindNames[] = {"variable", "const_scalar", "const_tensor", "delta",
                                      "add",      "einsum",       "elem_unary",   "gen_unary"};

std::string bits_of(double v) {
  std::ostringstream os;
  os << std::hex << std::bit_cast<std::uint64_t>(v);
  return os.str();
}

void append_set(std::string& key, const IndexSet& s) {
  key += '[';
  key += s.to_string();
  key += ']';
}

DenseTensor softmax_fn(const DenseTensor& in) {
  DenseTensor out(in.dims());
  double mx = -INFINITY;
  for (double v : in.data()) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= sum;
  return out;
}

UnaryOp elementwise(std::function<double(double)> fn,
                    std::function<std::optional<NodeId>(ExprDag&, NodeId)> deriv,
                    std::int64_t cost = 1) {
  UnaryOp op;
  op.kind = UnaryOp::Kind::Elementwise;
  op.scalar = std::move(fn);
  op.elem_derivative = std::move(deriv);
  op.cost_per_entry = cost;
  return op;
}

}  // namespace

const char* kind_name(NodeKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<NodeKind> kind_from_name(std::string_view name) {
  for (int i = 0; i < 8; ++i) {
    if (name == kKindNames[i]) return static_cast<NodeKind>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Unary registry

UnaryOpRegistry::UnaryOpRegistry() {
  ops_["exp"] = elementwise([](double x) { return std::exp(x); },
                            [](ExprDag& d, NodeId a) { return d.elem_unary("exp", a); });
  ops_["log"] = elementwise([](double x) { return std::log(x); },
                            [](ExprDag& d, NodeId a) { return d.elem_unary("elem_inverse", a); });
  // relu'(0) := 0, the usual subgradient choice.
  ops_["relu"] = elementwise([](double x) { return x > 0.0 ? x : 0.0; },
                             [](ExprDag& d, NodeId a) { return d.elem_unary("relu_grad", a); });
  ops_["relu_grad"] = elementwise([](double x) { return x > 0.0 ? 1.0 : 0.0; },
                                  [](ExprDag&, NodeId) { return std::optional<NodeId>{}; });
  ops_["elem_inverse"] = elementwise([](double x) { return 1.0 / x; },
                                     [](ExprDag& d, NodeId a) {
                                       return d.scale(-1.0, d.elem_unary("elem_square",
                                                                         d.elem_unary("elem_inverse", a)));
                                     });
  ops_["elem_square"] = elementwise([](double x) { return x * x; },
                                    [](ExprDag& d, NodeId a) { return d.scale(2.0, a); });

  // softmax over all entries of its argument; f'(A) = diag(p) - p (x) p.
  UnaryOp softmax;
  softmax.kind = UnaryOp::Kind::General;
  softmax.tensor_fn = softmax_fn;
  softmax.cost_per_entry = 3;
  softmax.general_derivative = [](ExprDag& d, NodeId a, const Labels& range,
                                  const Labels& domain) -> std::optional<NodeId> {
    const IndexSet& shape = d.node(a).index_set;
    NodeId p = d.gen_unary("softmax", a);
    NodeId unit = d.delta(IndexSet::from(range, shape.dims()), IndexSet::from(domain, shape.dims()));
    Labels both = range;
    both.insert(both.end(), domain.begin(), domain.end());
    NodeId diag = d.einsum(unit, both, p, range, both);
    NodeId outer = d.einsum(p, range, p, domain, both);
    return d.subtract(diag, outer);
  };
  ops_["softmax"] = std::move(softmax);
}

UnaryOpRegistry& UnaryOpRegistry::instance() {
  static UnaryOpRegistry registry;
  return registry;
}

const UnaryOp* UnaryOpRegistry::find(const std::string& name) const {
  auto it = ops_.find(name);
  return it == ops_.end() ? nullptr : &it->second;
}

const UnaryOp& UnaryOpRegistry::at(const std::string& name) const {
  const UnaryOp* op = find(name);
  if (!op) throw Error(ErrorCode::UnregisteredUnaryOp, "unary function '" + name + "' is not registered");
  return *op;
}

void UnaryOpRegistry::add(const std::string& name, UnaryOp op) { ops_[name] = std::move(op); }

std::vector<std::string> UnaryOpRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, op] : ops_) out.push_back(name);
  return out;
}

// ---------------------------------------------------------------------------
// ExprDag

std::string ExprDag::key_of(const Node& n) {
  std::string key = kind_name(n.kind);
  key += '|';
  key += n.name;
  key += '|';
  append_set(key, n.index_set);
  append_set(key, n.s1);
  append_set(key, n.s2);
  append_set(key, n.s3);
  for (NodeId c : n.children) key += std::to_string(c) + ',';
  key += '|';
  key += bits_of(n.value);
  if (n.tensor) {
    key += '|';
    for (double v : n.tensor->data()) key += bits_of(v) + ';';
  }
  return key;
}

void ExprDag::note_labels(const Node& n) {
  for (const auto* s : {&n.index_set, &n.s1, &n.s2, &n.s3}) {
    for (const auto& idx : *s) used_labels_.insert(idx.label);
  }
}

NodeId ExprDag::intern(Node node) {
  std::string key = key_of(node);
  auto it = table_.find(key);
  if (it != table_.end()) return it->second;
  auto id = static_cast<NodeId>(nodes_.size());
  note_labels(node);
  nodes_.push_back(std::move(node));
  table_.emplace(std::move(key), id);
  return id;
}

NodeId ExprDag::variable(const std::string& name, const IndexSet& index_set) {
  declare_input(name, index_set);
  Node n;
  n.kind = NodeKind::Variable;
  n.name = name;
  n.index_set = index_set;
  return intern(std::move(n));
}

void ExprDag::declare_input(const std::string& name, const IndexSet& index_set) {
  auto it = inputs_.find(name);
  if (it != inputs_.end()) {
    if (it->second != index_set) {
      throw Error(ErrorCode::DimMismatch, "variable '" + name + "' redeclared with index set [" +
                                              index_set.to_string() + "], was [" +
                                              it->second.to_string() + "]");
    }
  } else {
    inputs_.emplace(name, index_set);
    input_order_.push_back(name);
  }
}

NodeId ExprDag::scalar(double value) { return fill(value, IndexSet{}); }

NodeId ExprDag::fill(double value, const IndexSet& index_set) {
  Node n;
  n.kind = NodeKind::ConstScalar;
  n.value = value;
  n.index_set = index_set;
  return intern(std::move(n));
}

NodeId ExprDag::tensor(const IndexSet& index_set, DenseTensor value) {
  if (value.dims() != index_set.dims()) {
    throw Error(ErrorCode::DimMismatch, "constant tensor shape does not match [" + index_set.to_string() + "]");
  }
  Node n;
  n.kind = NodeKind::ConstTensor;
  n.index_set = index_set;
  n.tensor = std::make_shared<const DenseTensor>(std::move(value));
  return intern(std::move(n));
}

NodeId ExprDag::delta(const IndexSet& left, const IndexSet& right) {
  if (left.dims() != right.dims()) {
    throw Error(ErrorCode::DimMismatch, "delta pairs [" + left.to_string() + "] with [" +
                                            right.to_string() + "]");
  }
  Node n;
  n.kind = NodeKind::Delta;
  n.s1 = left;
  n.s2 = right;
  n.index_set = left.concat(right);
  return intern(std::move(n));
}

NodeId ExprDag::add(NodeId left, NodeId right) {
  const IndexSet& a = node(left).index_set;
  const IndexSet& b = node(right).index_set;
  if (a.dims() != b.dims()) {
    throw Error(ErrorCode::DimMismatch, "addition of [" + a.to_string() + "] and [" + b.to_string() + "]");
  }
  Node n;
  n.kind = NodeKind::Add;
  n.children = {left, right};
  n.index_set = a;
  return intern(std::move(n));
}

NodeId ExprDag::einsum(NodeId left, const Labels& s1, NodeId right, const Labels& s2, const Labels& s3) {
  const IndexSet& a = node(left).index_set;
  const IndexSet& b = node(right).index_set;
  for (const auto* s : {&s1, &s2, &s3}) {
    if (has_duplicates(*s)) {
      throw Error(ErrorCode::DuplicateIndex, "repeated label in '" + join_labels(*s) + "'");
    }
  }
  if (s1.size() != a.rank() || s2.size() != b.rank()) {
    throw Error(ErrorCode::DimMismatch, "einsum labels '" + join_labels(s1) + "," + join_labels(s2) +
                                            "' do not match operand ranks " + std::to_string(a.rank()) +
                                            "," + std::to_string(b.rank()));
  }
  IndexSet l = IndexSet::from(s1, a.dims());
  IndexSet r = IndexSet::from(s2, b.dims());
  for (const auto& idx : r) {
    if (auto p = l.position(idx.label); p && l[*p].dim != idx.dim) {
      throw Error(ErrorCode::DimMismatch, "label '" + idx.label + "' bound to extents " +
                                              std::to_string(l[*p].dim) + " and " + std::to_string(idx.dim));
    }
  }
  std::vector<Index> out;
  for (const auto& lab : s3) {
    if (auto p = l.position(lab)) {
      out.push_back(l[*p]);
    } else if (auto q = r.position(lab)) {
      out.push_back(r[*q]);
    } else {
      throw Error(ErrorCode::BadOutputIndex, "output label '" + lab + "' not among '" + join_labels(s1) +
                                                 "," + join_labels(s2) + "'");
    }
  }
  Node n;
  n.kind = NodeKind::Einsum;
  n.children = {left, right};
  n.s1 = std::move(l);
  n.s2 = std::move(r);
  n.s3 = IndexSet(std::move(out));
  n.index_set = n.s3;
  return intern(std::move(n));
}

NodeId ExprDag::elem_unary(const std::string& op, NodeId child) {
  const UnaryOp& u = UnaryOpRegistry::instance().at(op);
  if (u.kind != UnaryOp::Kind::Elementwise) {
    throw Error(ErrorCode::UnregisteredUnaryOp, "'" + op + "' is not an element-wise function");
  }
  Node n;
  n.kind = NodeKind::ElemUnary;
  n.name = op;
  n.children = {child};
  n.index_set = node(child).index_set;
  return intern(std::move(n));
}

NodeId ExprDag::gen_unary(const std::string& op, NodeId child) {
  return gen_unary(op, child, node(child).index_set.labels());
}

NodeId ExprDag::gen_unary(const std::string& op, NodeId child, const Labels& range) {
  const UnaryOp& u = UnaryOpRegistry::instance().at(op);
  if (u.kind != UnaryOp::Kind::General) {
    throw Error(ErrorCode::UnregisteredUnaryOp, "'" + op + "' is not a general unary function");
  }
  const IndexSet& domain = node(child).index_set;
  Node n;
  n.kind = NodeKind::GenUnary;
  n.name = op;
  n.children = {child};
  n.s1 = domain;
  n.s2 = IndexSet::from(range, domain.dims());
  n.index_set = n.s2;
  return intern(std::move(n));
}

NodeId ExprDag::scale(double factor, NodeId child) {
  Labels l = node(child).index_set.labels();
  return einsum(scalar(factor), {}, child, l, l);
}

NodeId ExprDag::relabel(NodeId child, const Labels& from, const Labels& to) {
  if (from == to && node(child).index_set.labels() == to) return child;
  return einsum(child, from, scalar(1.0), {}, to);
}

void ExprDag::add_output(NodeId id) {
  (void)node(id);
  outputs_.push_back(id);
}

void ExprDag::set_outputs(std::vector<NodeId> outputs) {
  for (NodeId id : outputs) (void)node(id);
  outputs_ = std::move(outputs);
}

const IndexSet& ExprDag::input_index_set(const std::string& name) const {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) throw Error(ErrorCode::UnknownVariable, "no variable named '" + name + "'");
  return it->second;
}

std::vector<NodeId> ExprDag::reachable() const { return reachable_from(outputs_); }

std::vector<NodeId> ExprDag::reachable_from(const std::vector<NodeId>& roots) const {
  std::vector<char> mark(nodes_.size(), 0);
  std::vector<NodeId> stack(roots.begin(), roots.end());
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (mark[id]) continue;
    mark[id] = 1;
    for (NodeId c : nodes_[id].children) stack.push_back(c);
  }
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (mark[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::uint32_t> ExprDag::use_counts() const {
  std::vector<std::uint32_t> uses(nodes_.size(), 0);
  for (NodeId id : reachable()) {
    for (NodeId c : nodes_[id].children) ++uses[c];
  }
  for (NodeId o : outputs_) ++uses[o];
  return uses;
}

NodeId ExprDag::import(const ExprDag& other, NodeId id) {
  std::unordered_map<NodeId, NodeId> memo;
  return import(other, id, memo);
}

NodeId ExprDag::import(const ExprDag& other, NodeId id, std::unordered_map<NodeId, NodeId>& memo) {
  for (NodeId n : other.reachable_from({id})) {
    if (memo.count(n)) continue;
    Node copy = other.node(n);
    for (auto& c : copy.children) c = memo.at(c);
    if (copy.kind == NodeKind::Variable && !inputs_.count(copy.name)) {
      inputs_.emplace(copy.name, copy.index_set);
      input_order_.push_back(copy.name);
    }
    memo[n] = intern(std::move(copy));
  }
  return memo.at(id);
}

ExprDag ExprDag::compact() const {
  ExprDag out;
  out.fresh_counter_ = fresh_counter_;
  // Keep declared inputs even if an output no longer depends on them.
  for (const auto& name : input_order_) {
    out.inputs_.emplace(name, inputs_.at(name));
    out.input_order_.push_back(name);
  }
  std::unordered_map<NodeId, NodeId> memo;
  std::vector<NodeId> outs;
  for (NodeId o : outputs_) outs.push_back(out.import(*this, o, memo));
  out.outputs_ = std::move(outs);
  return out;
}

std::string ExprDag::fingerprint() const {
  std::string out;
  for (const auto& name : input_order_) out += "input|" + name + "|" + inputs_.at(name).to_string() + '\n';
  std::set<NodeId> outs(outputs_.begin(), outputs_.end());
  // Nodes are numbered in post-order from the outputs, so the result does
  // not depend on the order in which they were created.
  std::unordered_map<NodeId, NodeId> number;
  std::function<NodeId(NodeId)> visit = [&](NodeId id) -> NodeId {
    if (auto it = number.find(id); it != number.end()) return it->second;
    Node n = nodes_[id];
    for (NodeId& c : n.children) c = visit(c);
    // Operands are bound positionally, so labels inside a node are local
    // names. Only variables and output index sets keep theirs.
    if (n.kind != NodeKind::Variable) {
      std::map<Label, Label> local;
      if (outs.count(id)) {
        for (const Label& l : n.index_set.labels()) local[l] = l;
      }
      auto canon = [&](const IndexSet& set) {
        Labels ls = set.labels();
        for (Label& l : ls) l = local.try_emplace(l, "~" + std::to_string(local.size())).first->second;
        return IndexSet::from(ls, set.dims());
      };
      n.s1 = canon(n.s1);
      n.s2 = canon(n.s2);
      n.s3 = canon(n.s3);
      n.index_set = canon(n.index_set);
    }
    out += key_of(n) + '\n';
    const NodeId k = static_cast<NodeId>(number.size());
    number[id] = k;
    return k;
  };
  std::vector<NodeId> roots;
  for (NodeId o : outputs_) roots.push_back(visit(o));
  for (NodeId o : roots) out += std::to_string(o) + ',';
  return out;
}

Label ExprDag::fresh_label() {
  for (;;) {
    Label l = "q" + std::to_string(++fresh_counter_);
    if (!used_labels_.count(l)) {
      used_labels_.insert(l);
      return l;
    }
  }
}

Index ExprDag::fresh_index(std::int64_t dim) {
  if (dim < 1) throw Error(ErrorCode::DimMismatch, "fresh index needs a positive extent");
  return {fresh_label(), dim};
}

NodeId ExprDag::rename_indices(NodeId id, const std::map<Label, Label>& mapping) {
  // Collect every label bound in the subgraph together with its extent.
  std::map<Label, std::int64_t> bound;
  auto sub = reachable_from({id});
  for (NodeId n : sub) {
    const Node& nd = nodes_[n];
    for (const auto* s : {&nd.index_set, &nd.s1, &nd.s2, &nd.s3}) {
      for (const auto& idx : *s) bound[idx.label] = idx.dim;
    }
  }
  auto map_label = [&](const Label& l) {
    auto it = mapping.find(l);
    return it == mapping.end() ? l : it->second;
  };
  for (const auto& [from, to] : mapping) {
    auto f = bound.find(from);
    if (f == bound.end()) continue;
    auto t = bound.find(to);
    if (t != bound.end() && t->second != f->second) {
      throw Error(ErrorCode::DimMismatch, "rename " + from + "->" + to + " changes extent " +
                                              std::to_string(f->second) + " to " + std::to_string(t->second));
    }
  }
  std::map<Label, Label> image;
  for (const auto& [l, dim] : bound) {
    Label m = map_label(l);
    auto [it, inserted] = image.emplace(m, l);
    if (!inserted && it->second != l) {
      throw Error(ErrorCode::NonInjectiveRename, "labels '" + it->second + "' and '" + l + "' both map to '" + m + "'");
    }
  }
  auto map_set = [&](const IndexSet& s) {
    std::vector<Index> out;
    for (const auto& idx : s) out.push_back({map_label(idx.label), idx.dim});
    return IndexSet(std::move(out));
  };
  auto map_labels = [&](const IndexSet& s) {
    Labels out;
    for (const auto& idx : s) out.push_back(map_label(idx.label));
    return out;
  };

  std::unordered_map<NodeId, NodeId> memo;
  for (NodeId n : sub) {
    const Node nd = nodes_[n];
    NodeId result = 0;
    switch (nd.kind) {
      case NodeKind::Variable: {
        Labels from = nd.index_set.labels();
        Labels to = map_labels(nd.index_set);
        result = from == to ? n : einsum(n, to, scalar(1.0), {}, to);
        break;
      }
      case NodeKind::ConstScalar: result = fill(nd.value, map_set(nd.index_set)); break;
      case NodeKind::ConstTensor: result = tensor(map_set(nd.index_set), *nd.tensor); break;
      case NodeKind::Delta: result = delta(map_set(nd.s1), map_set(nd.s2)); break;
      case NodeKind::Add: result = add(memo.at(nd.children[0]), memo.at(nd.children[1])); break;
      case NodeKind::Einsum:
        result = einsum(memo.at(nd.children[0]), map_labels(nd.s1), memo.at(nd.children[1]),
                        map_labels(nd.s2), map_labels(nd.s3));
        break;
      case NodeKind::ElemUnary: result = elem_unary(nd.name, memo.at(nd.children[0])); break;
      case NodeKind::GenUnary:
        result = gen_unary(nd.name, memo.at(nd.children[0]), map_labels(nd.s2));
        break;
    }
    memo[n] = result;
  }
  return memo.at(id);
}

NodeId make_einsum(ExprDag& dag, NodeId left, const IndexSet& s1, NodeId right, const IndexSet& s2,
                   const IndexSet& s3) {
  if (dag.node(left).index_set.dims() != s1.dims() || dag.node(right).index_set.dims() != s2.dims()) {
    throw Error(ErrorCode::DimMismatch, "operand shapes do not match [" + s1.to_string() + "] and [" +
                                            s2.to_string() + "]");
  }
  NodeId id = dag.einsum(left, s1.labels(), right, s2.labels(), s3.labels());
  if (dag.node(id).index_set.dims() != s3.dims()) {
    throw Error(ErrorCode::DimMismatch, "declared output extents disagree with operands");
  }
  return id;
}

IndexSet infer_shape(const ExprDag& dag, NodeId id) { return dag.node(id).index_set; }

bool is_fill(const Node& node, double value) {
  return node.kind == NodeKind::ConstScalar && node.value == value;
}

bool is_zero_const(const Node& node) {
  if (node.kind == NodeKind::ConstScalar) return node.value == 0.0;
  if (node.kind == NodeKind::ConstTensor) {
    return std::all_of(node.tensor->data().begin(), node.tensor->data().end(), [](double v) { return v == 0.0; });
  }
  return false;
}

}  // namespace tensorcalc
