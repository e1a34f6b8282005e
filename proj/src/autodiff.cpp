#include "tensorcalc/autodiff.hpp"

#include <algorithm>

#include "tensorcalc/product.hpp"
#include "tensorcalc/simplify.hpp"

namespace tensorcalc {

const char* mode_name(DiffMode mode) {
  switch (mode) {
    case DiffMode::Forward: return "forward";
    case DiffMode::Reverse: return "reverse";
    case DiffMode::Cross: return "cross";
  }
  return "?";
}

DiffMode mode_from_name(const std::string& name) {
  if (name == "forward") return DiffMode::Forward;
  if (name == "reverse") return DiffMode::Reverse;
  if (name == "cross") return DiffMode::Cross;
  throw Error(ErrorCode::InvalidArgument, "unknown differentiation mode '" + name + "'");
}

namespace {

using Slot = std::optional<NodeId>;

Labels concat(Labels a, const Labels& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Labels fresh_labels(ExprDag& d, std::size_t count) {
  Labels out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(d.fresh_label());
  return out;
}

void accumulate(ExprDag& d, Slot& slot, NodeId contribution) {
  slot = slot ? d.add(*slot, contribution) : contribution;
}

// lhs *_(l1, l2, out) rhs with the product distributed over additions in
// `spread` (the operand built by a general derivative rule). Keeps
// diag(p) - p (x) p from materialising as one dense tensor.
NodeId multiply_spread(ExprDag& d, NodeId lhs, const Labels& l1, NodeId rhs, const Labels& l2, const Labels& out,
                       bool spread_left) {
  NodeId spread = spread_left ? lhs : rhs;
  const Node& s = d.node(spread);
  if (s.kind == NodeKind::Add) {
    NodeId a = s.children[0], b = s.children[1];
    NodeId left = spread_left ? multiply_spread(d, a, l1, rhs, l2, out, true)
                              : multiply_spread(d, lhs, l1, a, l2, out, false);
    NodeId right = spread_left ? multiply_spread(d, b, l1, rhs, l2, out, true)
                               : multiply_spread(d, lhs, l1, b, l2, out, false);
    return d.add(left, right);
  }
  return d.einsum(lhs, l1, rhs, l2, out);
}

const ExprDag& checked_output(const ExprDag& dag, std::size_t output) {
  if (output >= dag.outputs().size()) {
    throw Error(ErrorCode::UnknownOutput, "output " + std::to_string(output) + " does not exist");
  }
  return dag;
}

void check_variable(const ExprDag& dag, const std::string& wrt) {
  if (!dag.has_input(wrt)) throw Error(ErrorCode::UnknownVariable, "no input variable named '" + wrt + "'");
}

// Labels for one more derivative axis group: the variable's own labels when
// they are free, fresh ones otherwise.
Labels copy_labels(ExprDag& d, const IndexSet& x, const Labels& taken) {
  Labels own = x.labels();
  bool clash = std::any_of(own.begin(), own.end(), [&](const Label& l) { return labels_contain(taken, l); });
  return clash ? fresh_labels(d, own.size()) : own;
}

// Tangents of every node reachable from `roots` w.r.t. `wrt`; a tangent has
// the node's axes followed by `s4`.
std::vector<Slot> forward_tangents(ExprDag& d, const std::vector<NodeId>& roots, const std::string& wrt,
                                   const Labels& s4) {
  const auto& registry = UnaryOpRegistry::instance();
  const IndexSet& x = d.input_index_set(wrt);
  std::vector<Slot> dot(d.store_size());
  for (NodeId id : d.reachable_from(roots)) {
    const Node n = d.node(id);
    switch (n.kind) {
      case NodeKind::Variable:
        if (n.name == wrt) dot[id] = d.delta(n.index_set, IndexSet::from(s4, x.dims()));
        break;
      case NodeKind::Add: {
        Slot a = dot[n.children[0]], b = dot[n.children[1]];
        if (a && b) {
          dot[id] = d.add(*a, *b);
        } else {
          dot[id] = a ? a : b;
        }
        break;
      }
      case NodeKind::Einsum: {
        const Labels s1 = n.s1.labels(), s2 = n.s2.labels(), s3s4 = concat(n.s3.labels(), s4);
        NodeId a = n.children[0], b = n.children[1];
        Slot out;
        if (dot[a]) accumulate(d, out, d.einsum(b, s2, *dot[a], concat(s1, s4), s3s4));
        if (dot[b]) accumulate(d, out, d.einsum(a, s1, *dot[b], concat(s2, s4), s3s4));
        dot[id] = out;
        break;
      }
      case NodeKind::ElemUnary: {
        NodeId a = n.children[0];
        if (!dot[a]) break;
        Slot fp = registry.at(n.name).elem_derivative(d, a);
        if (!fp) break;
        const Labels s1 = d.node(a).index_set.labels();
        dot[id] = d.einsum(*fp, s1, *dot[a], concat(s1, s4), concat(s1, s4));
        break;
      }
      case NodeKind::GenUnary: {
        NodeId a = n.children[0];
        if (!dot[a]) break;
        const Labels s1 = n.s1.labels();
        const Labels range = fresh_labels(d, n.s2.rank());
        Slot fp = registry.at(n.name).general_derivative(d, a, range, s1);
        if (!fp) break;
        dot[id] = multiply_spread(d, *fp, concat(range, s1), *dot[a], concat(s1, s4), concat(range, s4), true);
        break;
      }
      default: break;
    }
  }
  return dot;
}

std::vector<bool> depends_on_variables(const ExprDag& d) {
  std::vector<bool> active(d.store_size(), false);
  for (NodeId id = 0; id < d.store_size(); ++id) {
    const Node& n = d.node(id);
    if (n.kind == NodeKind::Variable) active[id] = true;
    for (NodeId c : n.children) active[id] = active[id] || active[c];
  }
  return active;
}

// Pullbacks of output node `y` into every node it depends on; a pullback has
// `o` (a fresh copy of y's axes) followed by the node's axes.
std::vector<Slot> reverse_adjoints(ExprDag& d, NodeId y, const Labels& o) {
  const auto& registry = UnaryOpRegistry::instance();
  const std::size_t initial = d.store_size();
  const std::vector<bool> active = depends_on_variables(d);
  std::vector<Slot> bar(initial);
  const IndexSet ys = d.node(y).index_set;
  bar[y] = ys.empty() ? d.scalar(1.0) : d.delta(IndexSet::from(o, ys.dims()), ys);

  std::vector<NodeId> order = d.reachable_from({y});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId id = *it;
    if (!bar[id] || !active[id]) continue;
    const NodeId cbar = *bar[id];
    const Node n = d.node(id);
    switch (n.kind) {
      case NodeKind::Add:
        for (NodeId c : n.children) {
          if (active[c]) accumulate(d, bar[c], cbar);
        }
        break;
      case NodeKind::Einsum: {
        const Labels s[2] = {n.s1.labels(), n.s2.labels()};
        const Labels os3 = concat(o, n.s3.labels());
        for (int side = 0; side < 2; ++side) {
          const NodeId target = n.children[side];
          if (!active[target]) continue;
          NodeId other = n.children[1 - side];
          Labels other_labels = s[1 - side];
          // Labels summed only inside the target's own operand are
          // broadcast back with a ones tensor.
          Labels missing;
          std::vector<std::int64_t> missing_dims;
          const IndexSet& ts = d.node(target).index_set;
          for (std::size_t i = 0; i < s[side].size(); ++i) {
            const Label& l = s[side][i];
            if (!labels_contain(n.s3.labels(), l) && !labels_contain(other_labels, l)) {
              missing.push_back(l);
              missing_dims.push_back(ts[i].dim);
            }
          }
          if (!missing.empty()) {
            NodeId ones = d.fill(1.0, IndexSet::from(missing, missing_dims));
            Labels widened = concat(other_labels, missing);
            other = d.einsum(other, other_labels, ones, missing, widened);
            other_labels = widened;
          }
          accumulate(d, bar[target], d.einsum(cbar, os3, other, other_labels, concat(o, s[side])));
        }
        break;
      }
      case NodeKind::ElemUnary: {
        NodeId a = n.children[0];
        if (!active[a]) break;
        Slot fp = registry.at(n.name).elem_derivative(d, a);
        if (!fp) break;
        const Labels s1 = d.node(a).index_set.labels();
        accumulate(d, bar[a], d.einsum(cbar, concat(o, s1), *fp, s1, concat(o, s1)));
        break;
      }
      case NodeKind::GenUnary: {
        NodeId a = n.children[0];
        if (!active[a]) break;
        const Labels s1 = n.s1.labels();
        const Labels range = fresh_labels(d, n.s2.rank());
        Slot fp = registry.at(n.name).general_derivative(d, a, range, s1);
        if (!fp) break;
        accumulate(d, bar[a],
                   multiply_spread(d, cbar, concat(o, range), *fp, concat(range, s1), concat(o, s1), false));
        break;
      }
      default: break;
    }
  }
  return bar;
}

std::optional<NodeId> find_variable(const ExprDag& d, NodeId root, const std::string& name) {
  for (NodeId id : d.reachable_from({root})) {
    const Node& n = d.node(id);
    if (n.kind == NodeKind::Variable && n.name == name) return id;
  }
  return std::nullopt;
}

// An einsum without summation. Inlining it into every consumer only repeats
// multiplications and lets the consumer avoid materializing it.
bool is_outer(const Node& n) {
  for (const auto& idx : n.s1) {
    if (!n.s3.contains(idx.label)) return false;
  }
  for (const auto& idx : n.s2) {
    if (!n.s3.contains(idx.label)) return false;
  }
  return true;
}

// Re-multiplies every maximal single-use einsum chain in increasing order of
// intermediate tensor order. Chains end at additions, unary functions and
// shared nodes other than plain outer products.
ExprDag reassociate(const ExprDag& in) {
  ExprDag d = in.compact();
  const auto uses = d.use_counts();
  const std::size_t initial = d.store_size();
  std::vector<NodeId> map(initial);
  for (NodeId id : d.reachable()) {
    const Node n = d.node(id);
    NodeId result = id;
    switch (n.kind) {
      case NodeKind::Einsum: {
        Product p = flatten_product(
            d, id,
            [&](NodeId c) { return c < initial && d.node(c).kind == NodeKind::Einsum && (uses[c] == 1 || is_outer(d.node(c))); },
            [&](NodeId c) { return c < initial ? map[c] : c; });
        eliminate_deltas(p);
        result = rebuild_product(d, p, ContractionOrder::IncreasingOrder);
        break;
      }
      case NodeKind::Add: result = d.add(map[n.children[0]], map[n.children[1]]); break;
      case NodeKind::ElemUnary: result = d.elem_unary(n.name, map[n.children[0]]); break;
      case NodeKind::GenUnary: result = d.gen_unary(n.name, map[n.children[0]], n.s2.labels()); break;
      default: break;
    }
    map[id] = result;
  }
  std::vector<NodeId> outs;
  for (NodeId o : d.outputs()) outs.push_back(relabel_root(d, map[o], d.node(o).index_set.labels()));
  d.set_outputs(std::move(outs));
  return d.compact();
}

DerivativeResult finish(ExprDag d, NodeId raw, const Labels& target, const std::string& wrt, std::size_t output,
                        int order, bool cross) {
  d.set_outputs({raw});
  d = d.compact();
  if (cross) d = reassociate(d);
  d.set_outputs({relabel_root(d, d.outputs()[0], target)});
  DerivativeResult r;
  r.dag = simplify(d);
  r.expr = r.dag.outputs()[0];
  r.wrt = wrt;
  r.output = output;
  r.order = order;
  return r;
}

DerivativeResult forward_one(const ExprDag& dag, std::size_t output, const std::string& wrt, int order) {
  ExprDag d = dag;
  const NodeId y = d.outputs()[output];
  const IndexSet x = d.input_index_set(wrt);
  const Labels ylabels = d.node(y).index_set.labels();
  const Labels s4 = fresh_labels(d, x.rank());
  auto dot = forward_tangents(d, {y}, wrt, s4);
  NodeId raw = dot[y] ? *dot[y] : d.zeros(d.node(y).index_set.concat(IndexSet::from(s4, x.dims())));
  const Labels target = concat(ylabels, copy_labels(d, x, ylabels));
  return finish(std::move(d), raw, target, wrt, output, order, false);
}

DerivativeResult reverse_one(const ExprDag& dag, std::size_t output, const std::string& wrt, int order, bool cross) {
  ExprDag d = dag;
  const NodeId y = d.outputs()[output];
  const IndexSet ys = d.node(y).index_set;
  const IndexSet x = d.input_index_set(wrt);
  const Labels o = fresh_labels(d, ys.rank());
  auto bar = reverse_adjoints(d, y, o);
  Slot raw;
  if (auto v = find_variable(d, y, wrt)) raw = bar[*v];
  if (!raw) raw = d.zeros(IndexSet::from(o, ys.dims()).concat(x));
  const Labels ylabels = ys.labels();
  const Labels target = concat(ylabels, copy_labels(d, x, ylabels));
  return finish(std::move(d), *raw, target, wrt, output, order, cross);
}

struct Split {
  NodeId core = 0;
  Labels core_labels;
  NodeId trailing = 0;
  Labels trailing_labels;
  std::vector<std::pair<Label, Label>> pairs;
};

bool is_delta_einsum(const ExprDag& d, NodeId id) {
  const Node& n = d.node(id);
  return n.kind == NodeKind::Einsum &&
         (d.node(n.children[0]).kind == NodeKind::Delta || d.node(n.children[1]).kind == NodeKind::Delta);
}

Labels rename(const Labels& labels, const std::map<Label, Label>& mapping) {
  Labels out;
  for (const Label& l : labels) out.push_back(mapping.at(l));
  return out;
}

// Splits `id` (result labels = its own index set) into core and trailing
// factor. `outer` admits plain outer products as trailing factors.
std::optional<Split> split_trailing(ExprDag& d, NodeId id, bool outer) {
  const Node n = d.node(id);
  const Labels full = n.index_set.labels();
  if (n.kind == NodeKind::Add) {
    auto a = split_trailing(d, n.children[0], outer);
    auto b = split_trailing(d, n.children[1], outer);
    if (!a || !b) return std::nullopt;
    const Labels lb = d.node(n.children[1]).index_set.labels();
    const Labels la = d.node(n.children[0]).index_set.labels();
    std::map<Label, Label> to_a;
    for (std::size_t i = 0; i < lb.size(); ++i) to_a[lb[i]] = la[i];
    if (rename(b->trailing_labels, to_a) != a->trailing_labels || rename(b->core_labels, to_a) != a->core_labels) {
      return std::nullopt;
    }
    if (a->pairs.empty() && a->trailing != b->trailing) return std::nullopt;
    Split s = *a;
    s.core = d.add(a->core, b->core);
    return s;
  }
  if (n.kind != NodeKind::Einsum) return std::nullopt;
  if (is_delta_einsum(d, id)) {
    Product p = flatten_product(d, id, [](NodeId) { return false; }, [](NodeId c) { return c; });
    if (!p.broadcast.empty() || p.zero) return std::nullopt;
    if (!eliminate_deltas(p)) return std::nullopt;
    Split s;
    std::vector<std::int64_t> ldims, rdims;
    Labels left, right;
    for (const auto& pr : p.deltas) {
      left.push_back(pr.left);
      right.push_back(pr.right);
      ldims.push_back(p.dims.at(pr.left));
      rdims.push_back(p.dims.at(pr.right));
      s.pairs.emplace_back(pr.left, pr.right);
    }
    Product core = p;
    core.deltas.clear();
    const Labels inner = core.factor_labels();
    core.output.clear();
    for (const Label& l : p.output) {
      if (labels_contain(inner, l)) core.output.push_back(l);
    }
    s.core = rebuild_product(d, core, ContractionOrder::IncreasingOrder);
    s.core_labels = core.output;
    s.trailing = d.delta(IndexSet::from(left, ldims), IndexSet::from(right, rdims));
    s.trailing_labels = concat(left, right);
    // Rebuilt labels use the product's output names, which are `full`.
    return s;
  }
  const Labels s1 = n.s1.labels(), s2 = n.s2.labels();
  const NodeId a = n.children[0], b = n.children[1];
  // Scalar coefficient around a splittable operand.
  for (int side = 0; side < 2; ++side) {
    const NodeId coeff = side == 0 ? a : b;
    const NodeId body = side == 0 ? b : a;
    const Labels& body_labels = side == 0 ? s2 : s1;
    if (!d.node(coeff).index_set.empty() || d.node(body).index_set.empty()) continue;
    if (body_labels.size() != full.size() || labels_union(body_labels, full).size() != full.size()) continue;
    auto inner = split_trailing(d, body, outer);
    if (!inner) return std::nullopt;
    const Labels bl = d.node(body).index_set.labels();
    std::map<Label, Label> to_full;
    for (std::size_t i = 0; i < bl.size(); ++i) to_full[bl[i]] = body_labels[i];
    // body_labels is a permutation of full, so positional renaming applies.
    Split s = *inner;
    s.core_labels = rename(inner->core_labels, to_full);
    s.trailing_labels = rename(inner->trailing_labels, to_full);
    if (!s.pairs.empty()) {
      for (auto& pr : s.pairs) pr = {to_full.at(pr.first), to_full.at(pr.second)};
    }
    s.core = d.einsum(coeff, {}, inner->core, inner->core_labels, inner->core_labels);
    return s;
  }
  if (!outer) return std::nullopt;
  for (const Label& l : s1) {
    if (labels_contain(s2, l)) return std::nullopt;
  }
  if (s1.size() + s2.size() != full.size() || s1.empty() || s2.empty()) return std::nullopt;
  const bool right_trails = s2.size() <= s1.size();
  Split s;
  s.core = right_trails ? a : b;
  s.core_labels = right_trails ? s1 : s2;
  s.trailing = right_trails ? b : a;
  s.trailing_labels = right_trails ? s2 : s1;
  return s;
}

}  // namespace

std::map<std::size_t, DerivativeResult> forward_diff(const ExprDag& dag, const std::string& wrt) {
  check_variable(dag, wrt);
  std::map<std::size_t, DerivativeResult> out;
  for (std::size_t i = 0; i < dag.outputs().size(); ++i) out.emplace(i, forward_one(dag, i, wrt, 1));
  return out;
}

std::map<std::string, DerivativeResult> reverse_diff(const ExprDag& dag, std::size_t output) {
  checked_output(dag, output);
  std::map<std::string, DerivativeResult> out;
  for (const auto& name : dag.input_names()) out.emplace(name, reverse_one(dag, output, name, 1, false));
  return out;
}

DerivativeResult cross_country_diff(const ExprDag& dag, std::size_t output, const std::string& wrt) {
  checked_output(dag, output);
  check_variable(dag, wrt);
  return reverse_one(dag, output, wrt, 1, true);
}

DerivativeResult differentiate(const ExprDag& dag, std::size_t output, const std::string& wrt, DiffMode mode) {
  checked_output(dag, output);
  check_variable(dag, wrt);
  switch (mode) {
    case DiffMode::Forward: return forward_one(dag, output, wrt, 1);
    case DiffMode::Reverse: return reverse_one(dag, output, wrt, 1, false);
    case DiffMode::Cross: return reverse_one(dag, output, wrt, 1, true);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown differentiation mode");
}

DerivativeResult higher_order(const ExprDag& dag, std::size_t output, const std::string& wrt, int order,
                              std::vector<DiffMode> modes) {
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "derivative order must be at least 1");
  if (modes.empty()) {
    modes.push_back(DiffMode::Reverse);
    while (static_cast<int>(modes.size()) < order) modes.push_back(DiffMode::Cross);
  }
  if (static_cast<int>(modes.size()) != order) {
    throw Error(ErrorCode::InvalidArgument, "need one mode per derivative level");
  }
  DerivativeResult r = differentiate(dag, output, wrt, modes[0]);
  for (int level = 1; level < order; ++level) {
    r = differentiate(r.dag, 0, wrt, modes[static_cast<std::size_t>(level)]);
  }
  r.output = output;
  r.order = order;
  return r;
}

DerivativeResult compress(const DerivativeResult& result) {
  if (result.compression) return result;
  ExprDag d = result.dag;
  const NodeId root = result.expr;
  auto split = split_trailing(d, root, result.order >= 2);
  if (!split) {
    if (is_delta_einsum(d, root)) {
      // Every unit tensor is eliminable: the simplified result stands.
      DeltaContraction c = delta_contract(d, root);
      if (!c.compressible) {
        DerivativeResult r = result;
        d.set_outputs({c.node});
        r.dag = simplify(d);
        r.expr = r.dag.outputs()[0];
        return r;
      }
    }
    throw Error(ErrorCode::NotCompressible, "derivative has no trailing unit-tensor or outer-product factor");
  }
  DerivativeResult r = result;
  d.set_outputs({split->core, split->trailing});
  r.dag = d.compact();
  CompressionRecord rec;
  rec.core = r.dag.outputs()[0];
  rec.trailing = r.dag.outputs()[1];
  rec.core_labels = split->core_labels;
  rec.trailing_labels = split->trailing_labels;
  rec.full_labels = result.dag.node(root).index_set.labels();
  rec.delta_pairs = split->pairs;
  r.expr = rec.core;
  r.compression = rec;
  return r;
}

NodeId expand(ExprDag& dag, const CompressionRecord& rec) {
  return dag.einsum(rec.core, rec.core_labels, rec.trailing, rec.trailing_labels, rec.full_labels);
}

DerivativeResult expand(const DerivativeResult& result) {
  if (!result.compression) return result;
  DerivativeResult r = result;
  ExprDag d = result.dag;
  d.set_outputs({expand(d, *result.compression)});
  r.dag = d.compact();
  r.expr = r.dag.outputs()[0];
  r.compression.reset();
  return r;
}

ExprDag derivative_dag(const DerivativeResult& result) { return expand(result).dag; }

}  // namespace tensorcalc
