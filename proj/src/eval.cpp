#include "tensorcalc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace tensorcalc {

namespace {

struct LoopAxis {
  std::int64_t dim;
  std::int64_t stride_a;
  std::int64_t stride_b;
  std::int64_t stride_c;
};

std::int64_t label_stride(const Labels& labels, const std::vector<std::int64_t>& strides, const Label& l) {
  auto it = std::find(labels.begin(), labels.end(), l);
  return it == labels.end() ? 0 : strides[static_cast<std::size_t>(it - labels.begin())];
}

std::vector<std::int64_t> result_dims(const DenseTensor& a, const Labels& s1, const DenseTensor& b,
                                      const Labels& s2, const Labels& s3) {
  std::vector<std::int64_t> dims;
  for (const auto& l : s3) {
    auto ia = std::find(s1.begin(), s1.end(), l);
    if (ia != s1.end()) {
      dims.push_back(a.dims()[static_cast<std::size_t>(ia - s1.begin())]);
      continue;
    }
    auto ib = std::find(s2.begin(), s2.end(), l);
    if (ib == s2.end()) throw Error(ErrorCode::BadOutputIndex, "output label '" + l + "' unbound");
    dims.push_back(b.dims()[static_cast<std::size_t>(ib - s2.begin())]);
  }
  return dims;
}

void check_operand(const DenseTensor& t, const Labels& s) {
  if (t.rank() != s.size()) {
    throw Error(ErrorCode::DimMismatch, "operand of rank " + std::to_string(t.rank()) + " labeled '" +
                                            join_labels(s) + "'");
  }
}

// Reorders axes of `t` (labeled `from`) into the order `to`.
DenseTensor permute(const DenseTensor& t, const Labels& from, const Labels& to) {
  if (from == to) return t;
  std::vector<std::int64_t> dims;
  std::vector<std::int64_t> src_stride;
  auto strides = t.strides();
  for (const auto& l : to) {
    auto it = std::find(from.begin(), from.end(), l);
    auto p = static_cast<std::size_t>(it - from.begin());
    dims.push_back(t.dims()[p]);
    src_stride.push_back(strides[p]);
  }
  DenseTensor out(dims);
  std::vector<std::int64_t> idx(dims.size(), 0);
  std::int64_t src = 0;
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    out[flat] = t[static_cast<std::size_t>(src)];
    for (std::size_t k = dims.size(); k-- > 0;) {
      if (++idx[k] < dims[k]) {
        src += src_stride[k];
        break;
      }
      src -= src_stride[k] * (dims[k] - 1);
      idx[k] = 0;
    }
  }
  return out;
}

// Sums out every axis of `t` whose label is not in `keep`; returns the kept labels.
DenseTensor reduce(const DenseTensor& t, const Labels& labels, const Labels& keep, Labels& kept) {
  kept.clear();
  for (const auto& l : labels) {
    if (labels_contain(keep, l)) kept.push_back(l);
  }
  if (kept.size() == labels.size()) return t;
  return einsum_reference(t, labels, DenseTensor::scalar(1.0), {}, kept);
}

}  // namespace

DenseTensor einsum_reference(const DenseTensor& a, const Labels& s1, const DenseTensor& b, const Labels& s2,
                             const Labels& s3) {
  check_operand(a, s1);
  check_operand(b, s2);
  DenseTensor c(result_dims(a, s1, b, s2, s3));
  Labels all = labels_union(s1, s2);
  Labels loop = s3;
  for (const auto& l : all) {
    if (!labels_contain(s3, l)) loop.push_back(l);
  }
  auto sa = a.strides(), sb = b.strides(), sc = c.strides();
  std::vector<LoopAxis> axes;
  for (const auto& l : loop) {
    std::int64_t dim;
    if (auto it = std::find(s1.begin(), s1.end(), l); it != s1.end()) {
      dim = a.dims()[static_cast<std::size_t>(it - s1.begin())];
    } else {
      auto jt = std::find(s2.begin(), s2.end(), l);
      dim = b.dims()[static_cast<std::size_t>(jt - s2.begin())];
    }
    axes.push_back({dim, label_stride(s1, sa, l), label_stride(s2, sb, l), label_stride(s3, sc, l)});
  }
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  std::int64_t total = 1;
  for (const auto& ax : axes) total *= ax.dim;
  if (axes.empty()) {
    pc[0] = pa[0] * pb[0];
    return c;
  }
  // Odometer over the loop axes; the innermost axis is advanced in a tight loop.
  std::vector<std::int64_t> idx(axes.size(), 0);
  std::int64_t oa = 0, ob = 0, oc = 0;
  const LoopAxis inner = axes.back();
  const std::size_t outer_n = axes.size() - 1;
  for (std::int64_t done = 0; done < total; done += inner.dim) {
    std::int64_t ia = oa, ib = ob, ic = oc;
    for (std::int64_t k = 0; k < inner.dim; ++k) {
      pc[ic] += pa[ia] * pb[ib];
      ia += inner.stride_a;
      ib += inner.stride_b;
      ic += inner.stride_c;
    }
    for (std::size_t k = outer_n; k-- > 0;) {
      const LoopAxis& ax = axes[k];
      if (++idx[k] < ax.dim) {
        oa += ax.stride_a;
        ob += ax.stride_b;
        oc += ax.stride_c;
        break;
      }
      oa -= ax.stride_a * (ax.dim - 1);
      ob -= ax.stride_b * (ax.dim - 1);
      oc -= ax.stride_c * (ax.dim - 1);
      idx[k] = 0;
    }
  }
  return c;
}

DenseTensor einsum_optimized(const DenseTensor& a, const Labels& s1, const DenseTensor& b, const Labels& s2,
                             const Labels& s3) {
  check_operand(a, s1);
  check_operand(b, s2);
  // Pre-sum labels private to one operand and absent from the output.
  Labels keep_a = s3, keep_b = s3;
  keep_a.insert(keep_a.end(), s2.begin(), s2.end());
  keep_b.insert(keep_b.end(), s1.begin(), s1.end());
  Labels la, lb;
  DenseTensor ra = reduce(a, s1, keep_a, la);
  DenseTensor rb = reduce(b, s2, keep_b, lb);

  Labels batch, free_a, free_b, contracted;
  for (const auto& l : la) {
    bool in_b = labels_contain(lb, l), in_c = labels_contain(s3, l);
    if (in_b && in_c) batch.push_back(l);
    else if (in_b) contracted.push_back(l);
    else free_a.push_back(l);
  }
  for (const auto& l : lb) {
    if (!labels_contain(la, l)) free_b.push_back(l);
  }
  auto extent = [&](const Labels& ls) {
    std::int64_t n = 1;
    for (const auto& l : ls) {
      auto it = std::find(la.begin(), la.end(), l);
      if (it != la.end()) {
        n *= ra.dims()[static_cast<std::size_t>(it - la.begin())];
      } else {
        auto jt = std::find(lb.begin(), lb.end(), l);
        n *= rb.dims()[static_cast<std::size_t>(jt - lb.begin())];
      }
    }
    return n;
  };
  Labels order_a = batch, order_b = batch, order_c = batch;
  order_a.insert(order_a.end(), free_a.begin(), free_a.end());
  order_a.insert(order_a.end(), contracted.begin(), contracted.end());
  order_b.insert(order_b.end(), contracted.begin(), contracted.end());
  order_b.insert(order_b.end(), free_b.begin(), free_b.end());
  order_c.insert(order_c.end(), free_a.begin(), free_a.end());
  order_c.insert(order_c.end(), free_b.begin(), free_b.end());
  DenseTensor pa = permute(ra, la, order_a);
  DenseTensor pb = permute(rb, lb, order_b);
  const std::int64_t nb = extent(batch), m = extent(free_a), n = extent(free_b), k = extent(contracted);

  std::vector<std::int64_t> cdims;
  for (const auto& l : order_c) cdims.push_back(extent({l}));
  DenseTensor pc(cdims);
  for (std::int64_t t = 0; t < nb; ++t) {
    const double* A = pa.data().data() + t * m * k;
    const double* B = pb.data().data() + t * k * n;
    double* C = pc.data().data() + t * m * n;
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* brow = B + p * n;
        double* crow = C + i * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  return permute(pc, order_c, s3);
}

DenseTensor delta_tensor(const std::vector<std::int64_t>& pair_dims) {
  std::vector<std::int64_t> dims = pair_dims;
  dims.insert(dims.end(), pair_dims.begin(), pair_dims.end());
  DenseTensor out(dims);
  std::int64_t half = element_count(pair_dims);
  for (std::int64_t i = 0; i < half; ++i) out[static_cast<std::size_t>(i * half + i)] = 1.0;
  return out;
}

NodeFlops node_flops(const ExprDag& dag, NodeId id) {
  const Node& n = dag.node(id);
  NodeFlops f;
  f.id = id;
  switch (n.kind) {
    case NodeKind::Einsum: {
      std::int64_t all = n.s1.elements();
      for (const auto& idx : n.s2) {
        if (!n.s1.contains(idx.label)) all *= idx.dim;
      }
      f.multiplies = all;
      f.adds = all - n.s3.elements();
      break;
    }
    case NodeKind::Add: f.adds = n.index_set.elements(); break;
    case NodeKind::ElemUnary:
    case NodeKind::GenUnary:
      f.unary = n.index_set.elements() * UnaryOpRegistry::instance().at(n.name).cost_per_entry;
      break;
    default: break;
  }
  return f;
}

FlopReport count_flops(const ExprDag& dag) {
  FlopReport r;
  for (NodeId id : dag.reachable()) {
    NodeFlops f = node_flops(dag, id);
    r.multiplies += f.multiplies;
    r.adds += f.adds;
    r.unary += f.unary;
    r.per_node.push_back(f);
  }
  return r;
}

void check_environment(const ExprDag& dag, const Environment& env) {
  for (const auto& name : dag.input_names()) {
    auto it = env.find(name);
    if (it == env.end()) throw Error(ErrorCode::MissingBinding, "variable '" + name + "' is unbound");
    if (it->second.dims() != dag.input_index_set(name).dims()) {
      throw Error(ErrorCode::DimMismatch, "binding for '" + name + "' has the wrong shape, expected [" +
                                              dag.input_index_set(name).to_string() + "]");
    }
  }
}

namespace {

std::vector<DenseTensor> evaluate_roots(const ExprDag& dag, const std::vector<NodeId>& roots,
                                        const Environment& env, EvalOptions options, FlopReport* report) {
  std::vector<std::optional<DenseTensor>> memo(dag.store_size());
  for (NodeId id : dag.reachable_from(roots)) {
    const Node& n = dag.node(id);
    DenseTensor value;
    switch (n.kind) {
      case NodeKind::Variable: {
        auto it = env.find(n.name);
        if (it == env.end()) throw Error(ErrorCode::MissingBinding, "variable '" + n.name + "' is unbound");
        if (it->second.dims() != n.index_set.dims()) {
          throw Error(ErrorCode::DimMismatch, "binding for '" + n.name + "' has the wrong shape, expected [" +
                                                  n.index_set.to_string() + "]");
        }
        value = it->second;
        break;
      }
      case NodeKind::ConstScalar: value = DenseTensor(n.index_set.dims(), n.value); break;
      case NodeKind::ConstTensor: value = *n.tensor; break;
      case NodeKind::Delta: value = delta_tensor(n.s1.dims()); break;
      case NodeKind::Add: {
        const DenseTensor& a = *memo[n.children[0]];
        const DenseTensor& b = *memo[n.children[1]];
        value = a;
        for (std::size_t i = 0; i < value.size(); ++i) value[i] += b[i];
        break;
      }
      case NodeKind::Einsum: {
        const DenseTensor& a = *memo[n.children[0]];
        const DenseTensor& b = *memo[n.children[1]];
        value = options.optimized ? einsum_optimized(a, n.s1.labels(), b, n.s2.labels(), n.s3.labels())
                                  : einsum_reference(a, n.s1.labels(), b, n.s2.labels(), n.s3.labels());
        break;
      }
      case NodeKind::ElemUnary: {
        const auto& fn = UnaryOpRegistry::instance().at(n.name).scalar;
        value = *memo[n.children[0]];
        for (double& v : value.data()) v = fn(v);
        break;
      }
      case NodeKind::GenUnary:
        value = UnaryOpRegistry::instance().at(n.name).tensor_fn(*memo[n.children[0]]);
        break;
    }
    if (report) {
      NodeFlops f = node_flops(dag, id);
      report->multiplies += f.multiplies;
      report->adds += f.adds;
      report->unary += f.unary;
      report->per_node.push_back(f);
    }
    memo[id] = std::move(value);
  }
  std::vector<DenseTensor> out;
  for (NodeId r : roots) out.push_back(*memo[r]);
  return out;
}

std::size_t find_output(const ExprDag& dag, std::size_t output) {
  if (output >= dag.outputs().size()) {
    throw Error(ErrorCode::UnknownOutput, "output " + std::to_string(output) + " does not exist");
  }
  return output;
}

}  // namespace

Evaluation evaluate(const ExprDag& dag, const Environment& env, EvalOptions options) {
  Evaluation e;
  e.outputs = evaluate_roots(dag, dag.outputs(), env, options, &e.flops);
  return e;
}

DenseTensor evaluate_node(const ExprDag& dag, NodeId id, const Environment& env, EvalOptions options) {
  return evaluate_roots(dag, {id}, env, options, nullptr).front();
}

DenseTensor inner_product(const DenseTensor& d, const DenseTensor& h) {
  if (h.rank() > d.rank() ||
      !std::equal(h.dims().begin(), h.dims().end(), d.dims().end() - static_cast<std::ptrdiff_t>(h.rank()))) {
    throw Error(ErrorCode::DimMismatch, "trailing axes of D do not match h");
  }
  Labels s1s2, s2, s1;
  for (std::size_t i = 0; i < d.rank(); ++i) {
    Label l = "a" + std::to_string(i);
    s1s2.push_back(l);
    if (i < d.rank() - h.rank()) s1.push_back(l);
    else s2.push_back(l);
  }
  return einsum_reference(d, s1s2, h, s2, s1);
}

DenseTensor finite_difference(const ExprDag& dag, std::size_t output, const std::string& wrt,
                              const Environment& env, double h) {
  find_output(dag, output);
  auto it = env.find(wrt);
  if (it == env.end()) throw Error(ErrorCode::MissingBinding, "variable '" + wrt + "' is unbound");
  NodeId root = dag.outputs()[output];
  Environment probe = env;
  DenseTensor& x = probe.at(wrt);
  const DenseTensor x0 = it->second;
  std::vector<std::int64_t> ydims = dag.node(root).index_set.dims();
  std::vector<std::int64_t> dims = ydims;
  dims.insert(dims.end(), x0.dims().begin(), x0.dims().end());
  DenseTensor out(dims);
  const std::size_t nx = x0.size();
  for (std::size_t j = 0; j < nx; ++j) {
    x[j] = x0[j] + h;
    DenseTensor fp = evaluate_roots(dag, {root}, probe, {}, nullptr).front();
    x[j] = x0[j] - h;
    DenseTensor fm = evaluate_roots(dag, {root}, probe, {}, nullptr).front();
    x[j] = x0[j];
    for (std::size_t i = 0; i < fp.size(); ++i) out[i * nx + j] = (fp[i] - fm[i]) / (2.0 * h);
  }
  return out;
}

DenseTensor finite_difference2(const ExprDag& dag, std::size_t output, const std::string& wrt,
                               const Environment& env, double h) {
  find_output(dag, output);
  auto it = env.find(wrt);
  if (it == env.end()) throw Error(ErrorCode::MissingBinding, "variable '" + wrt + "' is unbound");
  NodeId root = dag.outputs()[output];
  Environment probe = env;
  DenseTensor& x = probe.at(wrt);
  const DenseTensor x0 = it->second;
  std::vector<std::int64_t> dims = dag.node(root).index_set.dims();
  dims.insert(dims.end(), x0.dims().begin(), x0.dims().end());
  dims.insert(dims.end(), x0.dims().begin(), x0.dims().end());
  DenseTensor out(dims);
  const std::size_t nx = x0.size();
  auto f_at = [&](std::size_t i, double di, std::size_t j, double dj) {
    x[i] += di;
    x[j] += dj;
    DenseTensor v = evaluate_roots(dag, {root}, probe, {}, nullptr).front();
    x[i] = x0[i];
    x[j] = x0[j];
    return v;
  };
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = i; j < nx; ++j) {
      DenseTensor pp = f_at(i, h, j, h), pm = f_at(i, h, j, -h), mp = f_at(i, -h, j, h), mm = f_at(i, -h, j, -h);
      for (std::size_t y = 0; y < pp.size(); ++y) {
        double v = (pp[y] - pm[y] - mp[y] + mm[y]) / (4.0 * h * h);
        out[(y * nx + i) * nx + j] = v;
        out[(y * nx + j) * nx + i] = v;
      }
    }
  }
  return out;
}

}  // namespace tensorcalc
