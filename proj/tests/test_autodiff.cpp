#include <gtest/gtest.h>

#include <cmath>

#include "random_dag.hpp"
#include "support.hpp"
#include "tensorcalc/simplify.hpp"

using namespace tctest;

namespace {

const std::vector<DiffMode> kModes = {DiffMode::Forward, DiffMode::Reverse, DiffMode::Cross};

// Swaps the last two groups of `group` axes: T[y, a, b] -> T[y, b, a].
DenseTensor swap_groups(const DenseTensor& t, std::size_t group) {
  const auto& dims = t.dims();
  const std::size_t lead = dims.size() - 2 * group;
  std::vector<std::size_t> perm(dims.size());
  for (std::size_t i = 0; i < lead; ++i) perm[i] = i;
  for (std::size_t i = 0; i < group; ++i) {
    perm[lead + i] = lead + group + i;
    perm[lead + group + i] = lead + i;
  }
  std::vector<std::int64_t> out_dims(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) out_dims[i] = dims[perm[i]];
  DenseTensor out(out_dims);
  std::vector<std::int64_t> at(dims.size(), 0);
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    std::size_t dst = 0;
    for (std::size_t i = 0; i < dims.size(); ++i) dst = dst * out_dims[i] + at[perm[i]];
    out.data()[dst] = t.data()[flat];
    for (std::size_t i = dims.size(); i-- > 0;) {
      if (++at[i] < dims[i]) break;
      at[i] = 0;
    }
  }
  return out;
}

std::int64_t max_order(const ExprDag& d, const std::vector<NodeId>& roots) {
  std::int64_t m = 0;
  for (NodeId id : d.reachable_from(roots)) m = std::max<std::int64_t>(m, d.node(id).order());
  return m;
}

}  // namespace

TEST(ForwardDiff, SumOfSquaresGivesTwoX) {
  ExprDag d;
  NodeId x = d.variable("x", IndexSet({{"i", 2}}));
  d.add_output(d.einsum(x, {"i"}, x, {"i"}, {}));
  auto r = forward_diff(d, "x").at(0);
  EXPECT_EQ(eval_result(r, {{"x", tensor({2}, {1, 2})}}), tensor({2}, {2, 4}));
}

TEST(ForwardDiff, LinearMapGivesMatrix) {
  ExprDag d;
  NodeId A = d.variable("A", IndexSet({{"i", 2}, {"j", 2}}));
  NodeId x = d.variable("x", IndexSet({{"j", 2}}));
  d.add_output(d.einsum(A, {"i", "j"}, x, {"j"}, {"i"}));
  Environment env{{"A", tensor({2, 2}, {1, 2, 3, 4})}, {"x", tensor({2}, {-1, 5})}};
  for (DiffMode m : kModes) {
    auto r = differentiate(d, 0, "x", m);
    EXPECT_EQ(r.index_set().dims(), (std::vector<std::int64_t>{2, 2}));
    EXPECT_EQ(r.index_set().labels()[0], "i");
    EXPECT_EQ(eval_result(r, env), env["A"]) << mode_name(m);
  }
}

TEST(ForwardDiff, ElementwiseExpIsDiagonal) {
  ExprDag d;
  d.add_output(d.elem_unary("exp", d.variable("x", IndexSet({{"i", 2}}))));
  Environment env{{"x", tensor({2}, {0.0, std::log(2.0)})}};
  auto fd = finite_difference(d, 0, "x", env, 1e-6);
  for (DiffMode m : kModes) {
    auto got = eval_result(differentiate(d, 0, "x", m), env);
    EXPECT_LE(max_rel_diff(got, tensor({2, 2}, {1, 0, 0, 2})), 1e-12);
    EXPECT_LE(max_rel_diff(got, fd), 1e-8);
  }
}

TEST(ForwardDiff, SoftmaxJacobian) {
  ExprDag d;
  d.add_output(d.gen_unary("softmax", d.variable("x", IndexSet({{"i", 2}}))));
  Environment env{{"x", tensor({2}, {0, 0})}};
  // diag(p) - p p' with p = [0.5, 0.5]
  const DenseTensor analytic = tensor({2, 2}, {0.25, -0.25, -0.25, 0.25});
  auto fd = finite_difference(d, 0, "x", env, 1e-6);
  EXPECT_LE(max_rel_diff(fd, analytic), 1e-8);
  for (DiffMode m : kModes) EXPECT_LE(max_rel_diff(eval_result(differentiate(d, 0, "x", m), env), analytic), 1e-14);
}

TEST(ForwardDiff, UnknownVariable) {
  ExprDag d;
  d.add_output(d.variable("x", IndexSet({{"i", 2}})));
  try {
    forward_diff(d, "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownVariable);
  }
  try {
    reverse_diff(d, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownOutput);
  }
}

TEST(ReverseDiff, ColumnSums) {
  ExprDag d;
  NodeId A = d.variable("A", IndexSet({{"i", 2}, {"j", 2}}));
  NodeId x = d.variable("x", IndexSet({{"j", 2}}));
  d.add_output(d.einsum(A, {"i", "j"}, x, {"j"}, {}));
  Environment env{{"A", tensor({2, 2}, {1, 2, 3, 4})}, {"x", tensor({2}, {0.3, 0.1})}};
  auto grads = reverse_diff(d, 0);
  EXPECT_EQ(eval_result(grads.at("x"), env), tensor({2}, {4, 6}));
  // Per-entry oracle for A: d/dA_ij sum_i (Ax)_i = x_j.
  EXPECT_EQ(eval_result(grads.at("A"), env), tensor({2, 2}, {0.3, 0.1, 0.3, 0.1}));
}

TEST(ReverseDiff, UnreachableVariableIsZero) {
  ExprDag d;
  NodeId x = d.variable("x", IndexSet({{"i", 2}}));
  d.variable("z", IndexSet({{"k", 3}}));
  d.add_output(d.elem_unary("exp", x));
  auto grads = reverse_diff(d, 0);
  ASSERT_TRUE(grads.count("z"));
  Environment env{{"x", tensor({2}, {1, 2})}, {"z", tensor({3}, {1, 2, 3})}};
  EXPECT_EQ(eval_result(grads.at("z"), env), DenseTensor({2, 3}, 0.0));
  EXPECT_EQ(eval_result(forward_diff(d, "z").at(0), env), DenseTensor({2, 3}, 0.0));
}

TEST(ReverseDiff, LogisticRegressionGradientMatchesFiniteDifferences) {
  Problem p = make_logreg(4, 42);
  ASSERT_EQ(p.env["X"].dims(), (std::vector<std::int64_t>{8, 4}));
  auto fd = finite_difference(p.dag, 0, "w", p.env, 1e-6);
  for (DiffMode m : kModes) {
    EXPECT_LE(max_rel_diff(eval_result(differentiate(p.dag, 0, "w", m), p.env), fd), 1e-6) << mode_name(m);
  }
}

TEST(ReverseDiff, ScalarOutputPullbacksStayAtOperandOrder) {
  // With a scalar output every adjoint has the shape of its primal node, so
  // no generated node may exceed the largest primal order.
  Problem p = make_logreg(4, 42);
  const std::int64_t primal = max_order(p.dag, p.dag.outputs());
  auto r = differentiate(p.dag, 0, "w", DiffMode::Reverse);
  EXPECT_LE(max_order(r.dag, {r.expr}), primal);
  Problem nn = make_nn(2, 3, 42);
  auto g = differentiate(nn.dag, 0, "W1", DiffMode::Reverse);
  EXPECT_LE(max_order(g.dag, {g.expr}), max_order(nn.dag, nn.dag.outputs()));
}

TEST(CrossCountry, ChainMatchesReverseWithFewerFlops) {
  ExprDag d;
  NodeId A = d.variable("A", IndexSet({{"i", 3}, {"j", 3}}));
  NodeId B = d.variable("B", IndexSet({{"k", 3}, {"i", 3}}));
  NodeId x = d.variable("x", IndexSet({{"j", 3}}));
  NodeId hx = d.elem_unary("exp", d.einsum(A, {"i", "j"}, x, {"j"}, {"i"}));
  NodeId g = d.elem_unary("elem_square", hx);
  d.add_output(d.einsum(B, {"k", "i"}, g, {"i"}, {"k"}));
  std::mt19937_64 rng(9);
  Environment env{{"A", random_uniform({3, 3}, rng)}, {"B", random_uniform({3, 3}, rng)},
                  {"x", random_uniform({3}, rng)}};
  auto cross = differentiate(d, 0, "x", DiffMode::Cross);
  auto rev = differentiate(d, 0, "x", DiffMode::Reverse);
  EXPECT_LE(max_rel_diff(eval_result(cross, env), eval_result(rev, env)), 1e-12);
  EXPECT_LE(max_rel_diff(eval_result(cross, env), finite_difference(d, 0, "x", env, 1e-6)), 1e-7);
  const auto fc = evaluate(derivative_dag(cross), env).flops.total();
  const auto fr = evaluate(derivative_dag(rev), env).flops.total();
  EXPECT_LT(fc, fr);
}

TEST(CrossCountry, SingleChainScalarMatchesReverse) {
  ExprDag d;
  NodeId x = d.variable("x", IndexSet({{"i", 3}}));
  d.add_output(d.einsum(d.elem_unary("exp", x), {"i"}, d.fill(1.0, IndexSet({{"i", 3}})), {"i"}, {}));
  Environment env{{"x", tensor({3}, {0.1, -0.2, 0.3})}};
  EXPECT_LE(max_rel_diff(eval_result(differentiate(d, 0, "x", DiffMode::Cross), env),
                         eval_result(differentiate(d, 0, "x", DiffMode::Reverse), env)),
            1e-15);
}

TEST(HigherOrder, QuadraticFormHessian) {
  ExprDag d;
  NodeId x = d.variable("x", IndexSet({{"i", 2}}));
  NodeId A = d.variable("A", IndexSet({{"i", 2}, {"j", 2}}));
  d.add_output(d.einsum(x, {"i"}, d.einsum(A, {"i", "j"}, x, {"j"}, {"i"}), {"i"}, {}));
  Environment env{{"A", tensor({2, 2}, {2, 1, 1, 2})}, {"x", tensor({2}, {0.5, -1})}};
  for (DiffMode a : kModes) {
    for (DiffMode b : kModes) {
      auto h = higher_order(d, 0, "x", 2, {a, b});
      EXPECT_EQ(h.order, 2);
      EXPECT_LE(max_rel_diff(eval_result(h, env), tensor({2, 2}, {4, 2, 2, 4})), 1e-14);
    }
  }
}

TEST(HigherOrder, LogisticRegressionHessianMatchesSecondDifferences) {
  Problem p = make_logreg(4, 42);
  auto fd2 = finite_difference2(p.dag, 0, "w", p.env, 1e-3);
  auto h = higher_order(p.dag, 0, "w", 2);
  EXPECT_LE(max_rel_diff(eval_result(h, p.env), fd2), 1e-4);
}

TEST(HigherOrder, MatrixFactorizationHessianCompresses) {
  Problem p = make_matfac(6, 2, false, 42);
  auto h = higher_order(p.dag, 0, "U", 2);
  auto c = compress(h);
  ASSERT_TRUE(c.compression.has_value());
  const auto& rec = *c.compression;
  EXPECT_EQ(c.dag.node(rec.core).index_set.dims(), (std::vector<std::int64_t>{2, 2}));
  EXPECT_EQ(c.dag.node(rec.trailing).kind, NodeKind::Delta);
  EXPECT_EQ(rec.delta_pairs.size(), 1u);

  // core = 2 V'V, computed by loops.
  const DenseTensor& V = p.env["V"];
  DenseTensor vtv({2, 2}, 0.0);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int j = 0; j < 6; ++j) vtv.data()[a * 2 + b] += 2 * V.data()[j * 2 + a] * V.data()[j * 2 + b];
    }
  }
  ExprDag core_dag = c.dag;
  core_dag.set_outputs({rec.core});
  EXPECT_LE(max_rel_diff(eval_output(core_dag, p.env), vtv), 1e-12);

  // The expansion reproduces the full 6x2x6x2 Hessian.
  auto full = eval_result(expand(c), p.env);
  EXPECT_EQ(full.dims(), (std::vector<std::int64_t>{6, 2, 6, 2}));
  EXPECT_LE(max_rel_diff(full, eval_result(h, p.env)), 1e-12);
  EXPECT_LE(max_rel_diff(full, finite_difference2(p.dag, 0, "U", p.env, 1e-3)), 1e-6);
}

TEST(HigherOrder, NeuralNetHessianCoresAreOrderThree) {
  Problem p = make_nn(3, 3, 42);
  for (const std::string& w : p.params) {
    auto h = higher_order(p.dag, 0, w, 2);
    auto c = compress(h);
    ASSERT_TRUE(c.compression.has_value()) << w;
    EXPECT_LE(max_order(c.dag, {c.compression->core}), 3) << w;
    EXPECT_LE(max_rel_diff(eval_result(expand(c), p.env), eval_result(h, p.env)), 1e-10) << w;
    EXPECT_LE(max_rel_diff(eval_result(h, p.env), finite_difference2(p.dag, 0, w, p.env, 1e-3)), 1e-4) << w;
  }
}

TEST(Compress, GradientIsNotCompressible) {
  Problem p = make_logreg(4, 42);
  auto g = differentiate(p.dag, 0, "w", DiffMode::Cross);
  try {
    compress(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotCompressible);
  }
}

TEST(Compress, EliminableDeltaGivesPlainResult) {
  // An unsimplified Jacobian A *_(ij,jk,ik) delta: the unit tensor has a
  // summed label, so no compression record is produced.
  DerivativeResult r;
  NodeId A = r.dag.variable("A", IndexSet({{"i", 2}, {"j", 3}}));
  r.dag.variable("x", IndexSet({{"k", 3}}));
  NodeId delta = r.dag.delta(IndexSet({{"j", 3}}), IndexSet({{"k", 3}}));
  r.expr = r.dag.einsum(A, {"i", "j"}, delta, {"j", "k"}, {"i", "k"});
  r.dag.add_output(r.expr);
  r.wrt = "x";
  auto c = compress(r);
  EXPECT_FALSE(c.compression.has_value());
  for (NodeId id : c.dag.reachable()) EXPECT_NE(c.dag.node(id).kind, NodeKind::Delta);
  Environment env{{"A", tensor({2, 3}, {1, 2, 3, 4, 5, 6})}, {"x", tensor({3}, {0, 0, 0})}};
  EXPECT_EQ(eval_result(c, env), env["A"]);
  EXPECT_EQ(eval_result(expand(c), env), env["A"]);
}

TEST(AutodiffProperties, ModeEquivalenceAndShapeLaw) {
  std::mt19937_64 rng(2024);
  RandomDagOptions opt;
  opt.max_nodes = 20;
  opt.max_dim = 4;
  int checks = 0;
  for (int t = 0; t < 150; ++t) {
    auto r = random_dag(rng, opt);
    if (r.dag.outputs().empty()) continue;
    const IndexSet ys = r.dag.node(r.dag.outputs()[0]).index_set;
    for (const std::string& x : r.dag.input_names()) {
      const IndexSet xs = r.dag.input_index_set(x);
      std::vector<std::int64_t> want = ys.dims();
      const std::vector<std::int64_t> xd = xs.dims();
      want.insert(want.end(), xd.begin(), xd.end());
      DenseTensor ref;
      for (DiffMode m : kModes) {
        auto res = differentiate(r.dag, 0, x, m);
        EXPECT_EQ(res.index_set().dims(), want);
        EXPECT_FALSE(has_duplicates(res.index_set().labels()));
        const Labels got = res.index_set().labels();
        EXPECT_EQ(Labels(got.begin(), got.begin() + static_cast<std::ptrdiff_t>(ys.rank())), ys.labels());
        DenseTensor v = eval_result(res, r.env);
        if (m == DiffMode::Forward) {
          ref = v;
        } else {
          EXPECT_LE(max_rel_diff(v, ref), 1e-10) << mode_name(m) << "\n" << print_expr(r.dag);
        }
      }
      ++checks;
    }
  }
  EXPECT_GT(checks, 150);
}

TEST(AutodiffProperties, HessianSymmetry) {
  std::vector<Problem> problems;
  problems.push_back(make_logreg(4, 7));
  problems.push_back(make_matfac(4, 2, true, 7));
  problems.push_back(make_nn(2, 3, 7));
  for (const auto& p : problems) {
    for (const auto& w : p.params) {
      auto h = eval_result(higher_order(p.dag, 0, w, 2), p.env);
      const std::size_t group = p.dag.input_index_set(w).rank();
      EXPECT_LE(max_rel_diff(swap_groups(h, group), h), 1e-10) << p.kind << " " << w;
    }
  }
}

TEST(AutodiffProperties, FrechetRemainderShrinksLinearly) {
  Problem p = make_logreg(4, 3);
  auto D = eval_result(differentiate(p.dag, 0, "w", DiffMode::Cross), p.env);
  std::mt19937_64 rng(4);
  DenseTensor dir = random_uniform({4}, rng);
  const double f0 = eval_output(p.dag, p.env).data()[0];
  std::vector<double> ratios;
  for (double scale : {1e-2, 1e-3, 1e-4, 1e-5}) {
    DenseTensor h = dir;
    for (double& v : h.data()) v *= scale;
    Environment env = p.env;
    for (std::size_t i = 0; i < h.size(); ++i) env["w"].data()[i] += h.data()[i];
    const double f1 = eval_output(p.dag, env).data()[0];
    const double lin = inner_product(D, h).data()[0];
    ratios.push_back(std::abs(f1 - f0 - lin) / tensor_norm(h));
  }
  for (std::size_t i = 1; i < ratios.size(); ++i) {
    const double drop = ratios[i - 1] / ratios[i];
    EXPECT_GT(drop, 5.0) << i;
    EXPECT_LT(drop, 20.0) << i;
  }
}
