#include "tensorcalc/product.hpp"

#include <algorithm>
#include <limits>

namespace tensorcalc {

Labels Product::factor_labels(std::size_t skip) const {
  Labels out;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (i == skip) continue;
    for (const auto& l : factors[i].labels) {
      if (!labels_contain(out, l)) out.push_back(l);
    }
  }
  return out;
}

Product flatten_product(ExprDag& dag, NodeId root, const std::function<bool(NodeId)>& inline_child,
                        const std::function<NodeId(NodeId)>& map_leaf) {
  Product p;
  const Node& r = dag.node(root);
  p.output = r.s3.labels();
  for (const auto& idx : r.s3) p.dims[idx.label] = idx.dim;

  std::function<void(NodeId, const Labels&, bool)> walk = [&](NodeId id, const Labels& assigned, bool top) {
    const Node node = dag.node(id);
    const auto dims = node.index_set.dims();
    for (std::size_t k = 0; k < assigned.size(); ++k) p.dims[assigned[k]] = dims[k];
    if (node.kind == NodeKind::Einsum && (top || inline_child(id))) {
      std::map<Label, Label> m;
      for (std::size_t k = 0; k < node.s3.rank(); ++k) m[node.s3[k].label] = assigned[k];
      for (const auto* s : {&node.s1, &node.s2}) {
        for (const auto& idx : *s) {
          if (!m.count(idx.label)) {
            Label fresh = dag.fresh_label();
            m[idx.label] = fresh;
            p.dims[fresh] = idx.dim;
          }
        }
      }
      auto mapped = [&](const IndexSet& s) {
        Labels out;
        for (const auto& idx : s) out.push_back(m.at(idx.label));
        return out;
      };
      walk(node.children[0], mapped(node.s1), false);
      walk(node.children[1], mapped(node.s2), false);
      return;
    }
    if (node.kind == NodeKind::Delta) {
      const std::size_t half = node.s1.rank();
      for (std::size_t k = 0; k < half; ++k) p.deltas.push_back({assigned[k], assigned[half + k]});
      return;
    }
    p.factors.push_back({map_leaf(id), assigned});
  };
  walk(root, p.output, true);
  return p;
}

namespace {

void substitute(Product& p, const Label& from, const Label& to, std::size_t skip_pair) {
  for (auto& f : p.factors) {
    for (auto& l : f.labels) {
      if (l == from) l = to;
    }
  }
  for (std::size_t i = 0; i < p.deltas.size(); ++i) {
    if (i == skip_pair) continue;
    if (p.deltas[i].left == from) p.deltas[i].left = to;
    if (p.deltas[i].right == from) p.deltas[i].right = to;
  }
}

bool can_substitute(const Product& p, const Label& from, const Label& to) {
  for (const auto& f : p.factors) {
    if (labels_contain(f.labels, from) && labels_contain(f.labels, to)) return false;
  }
  return true;
}

bool label_used_elsewhere(const Product& p, const Label& l, std::size_t skip_pair) {
  if (labels_contain(p.output, l)) return true;
  for (const auto& f : p.factors) {
    if (labels_contain(f.labels, l)) return true;
  }
  for (std::size_t i = 0; i < p.deltas.size(); ++i) {
    if (i != skip_pair && (p.deltas[i].left == l || p.deltas[i].right == l)) return true;
  }
  return false;
}

}  // namespace

bool eliminate_deltas(Product& p) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < p.deltas.size(); ++i) {
      const DeltaPair d = p.deltas[i];
      if (d.left == d.right) {
        // delta(a|a) is 1; a free-standing summed copy contributes the extent.
        if (!label_used_elsewhere(p, d.left, i)) p.coefficient *= static_cast<double>(p.dims.at(d.left));
      } else if (!labels_contain(p.output, d.left) && can_substitute(p, d.left, d.right)) {
        substitute(p, d.left, d.right, i);
        // A pair over two otherwise unused summed labels sums to the extent.
        if (!label_used_elsewhere(p, d.right, i)) p.coefficient *= static_cast<double>(p.dims.at(d.right));
      } else if (!labels_contain(p.output, d.right) && can_substitute(p, d.right, d.left)) {
        substitute(p, d.right, d.left, i);
        if (!label_used_elsewhere(p, d.left, i)) p.coefficient *= static_cast<double>(p.dims.at(d.left));
      } else {
        continue;
      }
      p.deltas.erase(p.deltas.begin() + static_cast<std::ptrdiff_t>(i));
      changed = true;
      break;
    }
  }
  // Output labels that lost their last carrier are broadcast.
  const Labels carried = p.factor_labels();
  for (const auto& l : p.output) {
    bool covered = labels_contain(carried, l) || labels_contain(p.broadcast, l);
    for (const auto& d : p.deltas) covered = covered || d.left == l || d.right == l;
    if (!covered) p.broadcast.push_back(l);
  }
  return !p.deltas.empty();
}

namespace {

std::int64_t extent(const Product& p, const Labels& labels) {
  std::int64_t n = 1;
  for (const auto& l : labels) n *= p.dims.at(l);
  return n;
}

IndexSet set_of(const Product& p, const Labels& labels) {
  std::vector<Index> out;
  for (const auto& l : labels) out.push_back({l, p.dims.at(l)});
  return IndexSet(std::move(out));
}

// Folds constant-filled factors into the coefficient.
void resolve_constants(ExprDag& dag, Product& p) {
  std::vector<Factor> kept;
  Labels fill_labels;
  for (auto& f : p.factors) {
    const Node& n = dag.node(f.node);
    if (n.kind == NodeKind::ConstScalar) {
      p.coefficient *= n.value;
      for (const auto& l : f.labels) {
        if (!labels_contain(fill_labels, l)) fill_labels.push_back(l);
      }
    } else {
      kept.push_back(f);
    }
  }
  p.factors = std::move(kept);
  if (p.coefficient == 0.0) {
    p.zero = true;
    return;
  }
  Labels other = p.factor_labels();
  for (const auto& d : p.deltas) {
    other.push_back(d.left);
    other.push_back(d.right);
  }
  for (const auto& l : fill_labels) {
    if (labels_contain(other, l)) continue;
    if (labels_contain(p.output, l)) {
      if (!labels_contain(p.broadcast, l)) p.broadcast.push_back(l);
    } else {
      p.coefficient *= static_cast<double>(p.dims.at(l));
    }
  }
}

Labels needed_labels(const Product& p, const std::vector<Factor>& fs, std::size_t a, std::size_t b) {
  Labels need = p.output;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (i == a || i == b) continue;
    need.insert(need.end(), fs[i].labels.begin(), fs[i].labels.end());
  }
  for (const auto& d : p.deltas) {
    need.push_back(d.left);
    need.push_back(d.right);
  }
  Labels out;
  for (const auto& l : labels_union(fs[a].labels, fs[b].labels)) {
    if (labels_contain(need, l)) out.push_back(l);
  }
  return out;
}

}  // namespace

NodeId rebuild_product(ExprDag& dag, const Product& input, ContractionOrder order) {
  Product p = input;
  resolve_constants(dag, p);
  const IndexSet out_set = set_of(p, p.output);
  if (p.zero) return dag.zeros(out_set);

  std::vector<Factor> fs = p.factors;
  if (!p.broadcast.empty()) fs.push_back({dag.fill(1.0, set_of(p, p.broadcast)), p.broadcast});

  // A lone factor can take the coefficient in its final relabel; otherwise
  // scale the smallest factor up front.
  bool coefficient_pending = p.coefficient != 1.0;
  if (coefficient_pending && (fs.size() > 1 || (!fs.empty() && !p.deltas.empty()))) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < fs.size(); ++i) {
      if (extent(p, fs[i].labels) < extent(p, fs[best].labels)) best = i;
    }
    fs[best].node = dag.einsum(dag.scalar(p.coefficient), {}, fs[best].node, fs[best].labels, fs[best].labels);
    coefficient_pending = false;
  }

  while (fs.size() > 1) {
    std::size_t pick = 0;
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::int64_t best_size = std::numeric_limits<std::int64_t>::max();
    if (order == ContractionOrder::IncreasingOrder) {
      for (std::size_t i = 0; i + 1 < fs.size(); ++i) {
        Labels inter = needed_labels(p, fs, i, i + 1);
        std::int64_t size = extent(p, inter);
        if (inter.size() < best_rank || (inter.size() == best_rank && size < best_size)) {
          best_rank = inter.size();
          best_size = size;
          pick = i;
        }
      }
    }
    Labels inter = needed_labels(p, fs, pick, pick + 1);
    // The last contraction without unit tensors lands directly in output order.
    if (fs.size() == 2 && p.deltas.empty() && !coefficient_pending &&
        std::is_permutation(inter.begin(), inter.end(), p.output.begin(), p.output.end())) {
      inter = p.output;
    }
    NodeId node = dag.einsum(fs[pick].node, fs[pick].labels, fs[pick + 1].node, fs[pick + 1].labels, inter);
    fs[pick] = {node, inter};
    fs.erase(fs.begin() + static_cast<std::ptrdiff_t>(pick) + 1);
  }

  if (p.deltas.empty()) {
    if (fs.empty()) return dag.fill(p.coefficient, out_set);
    const Factor& core = fs.front();
    if (!coefficient_pending && core.labels == p.output) return core.node;
    if (coefficient_pending) return dag.einsum(dag.scalar(p.coefficient), {}, core.node, core.labels, p.output);
    return dag.einsum(core.node, core.labels, dag.scalar(1.0), {}, p.output);
  }

  // Unit tensors: one delta node when the pair labels are distinct.
  Labels left, right;
  for (const auto& d : p.deltas) {
    left.push_back(d.left);
    right.push_back(d.right);
  }
  Labels all = left;
  all.insert(all.end(), right.begin(), right.end());
  NodeId unit;
  Labels unit_labels;
  if (!has_duplicates(all)) {
    unit = dag.delta(set_of(p, left), set_of(p, right));
    unit_labels = all;
  } else {
    // Pairs sharing a label chain together; multiply them pairwise.
    const auto& d0 = p.deltas.front();
    unit = dag.delta(set_of(p, {d0.left}), set_of(p, {d0.right}));
    unit_labels = {d0.left, d0.right};
    for (std::size_t i = 1; i < p.deltas.size(); ++i) {
      const auto& d = p.deltas[i];
      NodeId next = dag.delta(set_of(p, {d.left}), set_of(p, {d.right}));
      Labels pair = {d.left, d.right};
      Labels merged = labels_union(unit_labels, pair);
      unit = dag.einsum(unit, unit_labels, next, pair, merged);
      unit_labels = merged;
    }
  }
  if (fs.empty()) {
    if (p.coefficient == 1.0 && unit_labels == p.output) return unit;
    return dag.einsum(dag.scalar(p.coefficient), {}, unit, unit_labels, p.output);
  }
  return dag.einsum(fs.front().node, fs.front().labels, unit, unit_labels, p.output);
}

}  // namespace tensorcalc

namespace tensorcalc {

NodeId relabel_root(ExprDag& dag, NodeId id, const Labels& target) {
  const Node n = dag.node(id);
  const Labels current = n.index_set.labels();
  if (current == target) return id;
  if (current.size() != target.size()) {
    throw Error(ErrorCode::DimMismatch, "relabel '" + join_labels(current) + "' to '" + join_labels(target) + "'");
  }
  if (n.kind == NodeKind::Delta) {
    const std::size_t half = n.s1.rank();
    Labels left(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(half));
    Labels right(target.begin() + static_cast<std::ptrdiff_t>(half), target.end());
    return dag.delta(IndexSet::from(left, n.s1.dims()), IndexSet::from(right, n.s2.dims()));
  }
  if (n.kind != NodeKind::Einsum) return dag.einsum(id, target, dag.scalar(1.0), {}, target);
  std::map<Label, Label> mapping;
  for (std::size_t i = 0; i < current.size(); ++i) mapping[current[i]] = target[i];
  for (const Label& l : labels_union(n.s1.labels(), n.s2.labels())) {
    if (mapping.count(l)) continue;
    mapping[l] = labels_contain(target, l) ? dag.fresh_label() : l;
  }
  auto apply = [&](const IndexSet& s) {
    Labels out;
    for (const Label& l : s.labels()) out.push_back(mapping.at(l));
    return out;
  };
  return dag.einsum(n.children[0], apply(n.s1), n.children[1], apply(n.s2), target);
}

}  // namespace tensorcalc
