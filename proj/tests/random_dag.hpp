#pragma once

#include <algorithm>
#include <random>

#include "tensorcalc/eval.hpp"
#include "tensorcalc/expr.hpp"

namespace tctest {

using namespace tensorcalc;

struct RandomDag {
  ExprDag dag;
  Environment env;
};

struct RandomDagOptions {
  int max_nodes = 12;
  std::size_t max_rank = 3;
  std::int64_t max_dim = 3;
  bool unary = true;      // elementwise and softmax nodes
  bool constants = true;  // fills, dense constants, scalars
  bool deltas = true;
};

inline DenseTensor random_uniform(const std::vector<std::int64_t>& dims, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  DenseTensor t(dims);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// A random valid DAG over a small label pool. Values stay moderate so that
// exp and products do not overflow tolerances.
inline RandomDag random_dag(std::mt19937_64& rng, const RandomDagOptions& opt = {}) {
  RandomDag out;
  ExprDag& d = out.dag;
  const Labels pool = {"a", "b", "c", "d", "e"};
  std::map<Label, std::int64_t> dim;
  std::uniform_int_distribution<std::int64_t> dim_dist(1, opt.max_dim);
  for (const Label& l : pool) dim[l] = dim_dist(rng);
  // Guarantee at least one pair of equal extents for deltas.
  dim["e"] = dim["a"];
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  auto random_labels = [&](std::size_t max_rank) {
    Labels ls = pool;
    std::shuffle(ls.begin(), ls.end(), rng);
    ls.resize(pick(max_rank + 1));
    return ls;
  };
  auto make_set = [&](const Labels& ls) {
    std::vector<std::int64_t> ds;
    for (const Label& l : ls) ds.push_back(dim[l]);
    return IndexSet::from(ls, ds);
  };

  std::vector<NodeId> nodes;
  const int nvars = 1 + static_cast<int>(pick(3));
  for (int v = 0; v < nvars; ++v) {
    Labels ls = random_labels(std::min<std::size_t>(opt.max_rank, 3));
    if (ls.empty() && coin(0.5)) ls = {pool[pick(pool.size())]};
    std::string name = std::string(1, static_cast<char>('x' + v % 3)) + (v >= 3 ? std::to_string(v) : "");
    nodes.push_back(d.variable(name, make_set(ls)));
    out.env[name] = random_uniform(make_set(ls).dims(), rng);
  }

  const char* elem_ops[] = {"exp", "elem_square"};
  for (int step = 0; step < opt.max_nodes; ++step) {
    const int choice = static_cast<int>(pick(10));
    NodeId a = nodes[pick(nodes.size())];
    const Node an = d.node(a);
    const Labels la = an.index_set.labels();
    try {
      if (choice <= 4) {
        NodeId b = nodes[pick(nodes.size())];
        if (opt.constants && coin(0.15)) {
          std::uniform_real_distribution<double> u(-2.0, 2.0);
          b = coin(0.5) ? d.scalar(std::round(u(rng) * 4) / 4) : d.fill(0.5, make_set(random_labels(2)));
        }
        if (opt.deltas && coin(0.2) && !la.empty()) {
          const Label l = la[pick(la.size())];
          Labels free;
          for (const Label& p : pool) {
            if (dim[p] == dim[l] && !labels_contain(la, p)) free.push_back(p);
          }
          if (!free.empty()) b = d.delta(make_set({l}), make_set({free[pick(free.size())]}));
        }
        const Labels lb = d.node(b).index_set.labels();
        Labels all = labels_union(la, lb);
        std::shuffle(all.begin(), all.end(), rng);
        all.resize(std::min(all.size(), pick(std::min(all.size(), opt.max_rank) + 1)));
        nodes.push_back(d.einsum(a, la, b, lb, all));
      } else if (choice <= 6) {
        std::vector<NodeId> same;
        for (NodeId n : nodes) {
          if (d.node(n).index_set.dims() == an.index_set.dims()) same.push_back(n);
        }
        NodeId b = same[pick(same.size())];
        if (opt.constants && coin(0.2)) b = d.fill(1.0, an.index_set);
        nodes.push_back(coin(0.5) ? d.add(a, b) : d.add(b, a));
      } else if (opt.unary && choice <= 8) {
        // Damp the argument first so exp stays tame.
        NodeId damped = d.scale(0.5, a);
        nodes.push_back(d.elem_unary(elem_ops[pick(2)], damped));
      } else if (opt.unary && !la.empty() && an.index_set.rank() <= 2) {
        nodes.push_back(d.gen_unary("softmax", a));
      } else if (opt.constants) {
        nodes.push_back(d.scale(-1.5, a));
      }
    } catch (const Error&) {
      // Shapes that do not compose are simply skipped.
    }
  }
  // The output is the newest node that depends on a variable.
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    bool live = false;
    for (NodeId id : d.reachable_from({*it})) live = live || d.node(id).kind == NodeKind::Variable;
    if (live) {
      d.add_output(*it);
      break;
    }
  }
  return out;
}

}  // namespace tctest
