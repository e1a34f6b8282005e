#include "tensorcalc/simplify.hpp"

#include "tensorcalc/product.hpp"

namespace tensorcalc {

namespace {

bool is_scalar_const(const Node& n) { return n.kind == NodeKind::ConstScalar && n.index_set.empty(); }

bool has_scalar_operand(const ExprDag& dag, NodeId id) {
  const Node& n = dag.node(id);
  if (n.kind != NodeKind::Einsum) return false;
  return is_scalar_const(dag.node(n.children[0])) || is_scalar_const(dag.node(n.children[1]));
}

// Splits c * X (an einsum with a scalar constant, no permutation) into (c, X).
std::pair<double, NodeId> scaled_base(const ExprDag& dag, NodeId id) {
  const Node& n = dag.node(id);
  if (n.kind == NodeKind::Einsum) {
    const Node& a = dag.node(n.children[0]);
    const Node& b = dag.node(n.children[1]);
    if (is_scalar_const(a) && n.s2 == n.s3) return {a.value, n.children[1]};
    if (is_scalar_const(b) && n.s1 == n.s3) return {b.value, n.children[0]};
  }
  return {1.0, id};
}

NodeId simplify_einsum(ExprDag& dag, NodeId plain) {
  const Node& n = dag.node(plain);
  const Node& a = dag.node(n.children[0]);
  const Node& b = dag.node(n.children[1]);
  bool fired = a.kind == NodeKind::ConstScalar || b.kind == NodeKind::ConstScalar || is_zero_const(a) ||
               is_zero_const(b);
  bool inlined = false;
  Product p = flatten_product(
      dag, plain,
      [&](NodeId child) {
        if (!has_scalar_operand(dag, child)) return false;
        inlined = true;
        return true;
      },
      [](NodeId id) { return id; });
  const std::size_t pairs = p.deltas.size();
  eliminate_deltas(p);
  fired = fired || inlined || p.deltas.size() < pairs;
  if (!fired) return plain;
  return rebuild_product(dag, p, ContractionOrder::LeftToRight);
}

ExprDag simplify_pass(const ExprDag& input) {
  ExprDag dag = input.compact();
  std::vector<NodeId> map(dag.store_size());
  for (NodeId id : dag.reachable()) {
    const Node n = dag.node(id);
    NodeId result = id;
    switch (n.kind) {
      case NodeKind::Add: {
        NodeId l = map[n.children[0]], r = map[n.children[1]];
        const Node& ln = dag.node(l);
        const Node& rn = dag.node(r);
        if (is_zero_const(ln)) {
          result = r;
        } else if (is_zero_const(rn)) {
          result = l;
        } else if (ln.kind == NodeKind::ConstScalar && rn.kind == NodeKind::ConstScalar) {
          result = dag.fill(ln.value + rn.value, n.index_set);
        } else if (auto [cl, bl] = scaled_base(dag, l); true) {
          auto [cr, br] = scaled_base(dag, r);
          if (bl == br) {
            // c1 X + c2 X = (c1 + c2) X
            const Labels labels = n.index_set.labels();
            const double c = cl + cr;
            result = c == 0.0 ? dag.zeros(n.index_set) : dag.einsum(dag.scalar(c), {}, bl, labels, labels);
          } else {
            result = dag.add(l, r);
          }
        }
        break;
      }
      case NodeKind::ElemUnary: {
        NodeId c = map[n.children[0]];
        const Node& cn = dag.node(c);
        if (cn.kind == NodeKind::ConstScalar) {
          result = dag.fill(UnaryOpRegistry::instance().at(n.name).scalar(cn.value), cn.index_set);
        } else {
          result = dag.elem_unary(n.name, c);
        }
        break;
      }
      case NodeKind::GenUnary: result = dag.gen_unary(n.name, map[n.children[0]], n.s2.labels()); break;
      case NodeKind::Einsum: {
        NodeId plain = dag.einsum(map[n.children[0]], n.s1.labels(), map[n.children[1]], n.s2.labels(),
                                  n.s3.labels());
        result = simplify_einsum(dag, plain);
        break;
      }
      default: break;
    }
    map[id] = result;
  }
  std::vector<NodeId> outs;
  for (NodeId o : dag.outputs()) {
    NodeId r = map[o];
    r = relabel_root(dag, r, dag.node(o).index_set.labels());
    outs.push_back(r);
  }
  dag.set_outputs(std::move(outs));
  return dag.compact();
}

}  // namespace

ExprDag simplify(const ExprDag& input) {
  ExprDag current = input.compact();
  std::string print = current.fingerprint();
  const std::size_t limit = current.store_size() + 2;
  for (std::size_t iter = 0; iter < limit; ++iter) {
    ExprDag next = simplify_pass(current);
    std::string next_print = next.fingerprint();
    if (next_print == print) break;
    current = std::move(next);
    print = std::move(next_print);
  }
  if (current.node_count() > input.node_count()) return input.compact();
  return current;
}

DeltaContraction delta_contract(ExprDag& dag, NodeId einsum_node) {
  const Node& n = dag.node(einsum_node);
  if (n.kind != NodeKind::Einsum) return {einsum_node, false};
  Product p = flatten_product(dag, einsum_node, [](NodeId) { return false; }, [](NodeId id) { return id; });
  if (p.deltas.empty()) return {einsum_node, false};
  const std::size_t pairs = p.deltas.size();
  bool survives = eliminate_deltas(p);
  if (p.deltas.size() == pairs) return {einsum_node, true};
  return {rebuild_product(dag, p, ContractionOrder::LeftToRight), survives};
}

}  // namespace tensorcalc
