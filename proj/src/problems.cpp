#include "tensorcalc/problems.hpp"

#include <cmath>

namespace tensorcalc {

DenseTensor random_normal(const std::vector<std::int64_t>& dims, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseTensor t(dims);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

namespace {

IndexSet set(const std::vector<std::pair<const char*, std::int64_t>>& entries) {
  std::vector<Index> out;
  for (const auto& [label, dim] : entries) out.push_back({label, dim});
  return IndexSet(std::move(out));
}

NodeId sum_all(ExprDag& d, NodeId x) { return d.einsum(x, d.node(x).index_set.labels(), d.scalar(1.0), {}, {}); }

}  // namespace

Problem make_logreg(std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "logreg needs n >= 1");
  const std::int64_t m = 2 * n;
  Problem p;
  p.kind = "logreg";
  p.n = n;
  ExprDag& d = p.dag;
  NodeId X = d.variable("X", set({{"i", m}, {"j", n}}));
  NodeId y = d.variable("y", set({{"i", m}}));
  NodeId w = d.variable("w", set({{"j", n}}));
  NodeId xw = d.einsum(X, {"i", "j"}, w, {"j"}, {"i"});
  NodeId margin = d.negate(d.einsum(y, {"i"}, xw, {"i"}, {"i"}));
  NodeId inner = d.add(d.elem_unary("exp", margin), d.fill(1.0, set({{"i", m}})));
  d.add_output(sum_all(d, d.elem_unary("log", inner)));
  p.params = {"w"};

  std::mt19937_64 rng(seed);
  p.env["X"] = random_normal({m, n}, rng);
  DenseTensor labels({m});
  std::bernoulli_distribution coin(0.5);
  for (double& v : labels.data()) v = coin(rng) ? 1.0 : -1.0;
  p.env["y"] = labels;
  p.env["w"] = random_normal({n}, rng);
  return p;
}

Problem make_matfac(std::int64_t n, std::int64_t k, bool masked, std::uint64_t seed) {
  if (n < 1 || k < 1) throw Error(ErrorCode::InvalidArgument, "matfac needs n, k >= 1");
  Problem p;
  p.kind = "matfac";
  p.n = n;
  p.k = k;
  ExprDag& d = p.dag;
  NodeId T = d.variable("T", set({{"i", n}, {"j", n}}));
  NodeId U = d.variable("U", set({{"i", n}, {"k", k}}));
  NodeId V = d.variable("V", set({{"j", n}, {"k", k}}));
  NodeId uv = d.einsum(U, {"i", "k"}, V, {"j", "k"}, {"i", "j"});
  NodeId r = d.subtract(T, uv);
  NodeId loss;
  if (masked) {
    NodeId mask = d.variable("M", set({{"i", n}, {"j", n}}));
    NodeId sq = d.einsum(r, {"i", "j"}, r, {"i", "j"}, {"i", "j"});
    loss = d.einsum(mask, {"i", "j"}, sq, {"i", "j"}, {});
  } else {
    loss = d.einsum(r, {"i", "j"}, r, {"i", "j"}, {});
  }
  d.add_output(loss);
  p.params = {"U", "V"};

  std::mt19937_64 rng(seed);
  p.env["T"] = random_normal({n, n}, rng);
  p.env["U"] = random_normal({n, k}, rng);
  p.env["V"] = random_normal({n, k}, rng);
  if (masked) {
    DenseTensor mask({n, n});
    std::bernoulli_distribution coin(0.5);
    for (double& v : mask.data()) v = coin(rng) ? 1.0 : 0.0;
    p.env["M"] = mask;
  }
  return p;
}

Problem make_nn(std::int64_t layers, std::int64_t width, std::uint64_t seed) {
  if (layers < 1 || width < 2) throw Error(ErrorCode::InvalidArgument, "nn needs layers >= 1 and width >= 2");
  Problem p;
  p.kind = "nn";
  p.n = width;
  p.k = layers;
  ExprDag& d = p.dag;
  // Alternate two label names so every layer reads "ab" or "ba".
  const Label a = "a", b = "b";
  NodeId h = d.variable("x", set({{"a", width}}));
  Label cur = a;
  std::vector<NodeId> pre;
  for (std::int64_t l = 1; l <= layers; ++l) {
    const Label next = cur == a ? b : a;
    const std::string name = "W" + std::to_string(l);
    NodeId W = d.variable(name, IndexSet({{next, width}, {cur, width}}));
    p.params.push_back(name);
    NodeId z = d.einsum(W, {next, cur}, h, {cur}, {next});
    pre.push_back(z);
    h = l < layers ? d.elem_unary("relu", z) : z;
    cur = next;
  }
  NodeId onehot = d.variable("t", IndexSet({{cur, width}}));
  NodeId logp = d.elem_unary("log", d.gen_unary("softmax", h));
  d.add_output(d.negate(d.einsum(onehot, {cur}, logp, {cur}, {})));

  for (std::uint64_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng(seed + attempt * 7919);
    Environment env;
    env["x"] = random_normal({width}, rng);
    for (std::int64_t l = 1; l <= layers; ++l) {
      DenseTensor W = random_normal({width, width}, rng);
      for (double& v : W.data()) v /= std::sqrt(static_cast<double>(width));
      env["W" + std::to_string(l)] = W;
    }
    DenseTensor t({width}, 0.0);
    t.data()[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(width))] = 1.0;
    env["t"] = t;
    bool clear = true;
    for (std::size_t l = 0; l + 1 < pre.size(); ++l) {
      const DenseTensor z = evaluate_node(d, pre[l], env);
      for (double v : z.data()) clear = clear && std::abs(v) > 0.05;
    }
    if (clear || attempt > 10000) {
      p.env = std::move(env);
      break;
    }
  }
  return p;
}

Problem make_problem(const std::string& kind, std::int64_t n, std::int64_t k, std::int64_t layers,
                     std::uint64_t seed) {
  if (kind == "logreg") return make_logreg(n, seed);
  if (kind == "matfac") return make_matfac(n, k, false, seed);
  if (kind == "matfac-masked") return make_matfac(n, k, true, seed);
  if (kind == "nn") return make_nn(layers, n, seed);
  throw Error(ErrorCode::InvalidArgument, "unknown problem '" + kind + "'");
}

}  // namespace tensorcalc
