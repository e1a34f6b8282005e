#include <gtest/gtest.h>

#include "random_dag.hpp"
#include "support.hpp"

using namespace tctest;

namespace {

// Shape of the graph below `id`: kinds, op names and child structure, with
// shared nodes referenced by their first-visit number.
std::string structure(const ExprDag& d, NodeId id, std::map<NodeId, int>& seen) {
  if (auto it = seen.find(id); it != seen.end()) return "@" + std::to_string(it->second);
  const int number = static_cast<int>(seen.size());
  seen[id] = number;
  const Node& n = d.node(id);
  std::string out = kind_name(n.kind);
  if (!n.name.empty()) out += ":" + n.name;
  out += "(";
  for (NodeId c : n.children) out += structure(d, c, seen) + ",";
  return out + ")";
}

std::string structure(const ExprDag& d) {
  std::map<NodeId, int> seen;
  std::string out;
  for (NodeId o : d.outputs()) out += structure(d, o, seen) + ";";
  return out;
}

std::string signature(const ExprDag& d, std::size_t output) {
  const Node& n = d.node(d.outputs()[output]);
  EXPECT_EQ(n.kind, NodeKind::Einsum);
  return join_labels(n.s1.labels()) + "," + join_labels(n.s2.labels()) + "->" + join_labels(n.s3.labels());
}

ErrorCode code_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for: " << text;
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Parse, LogisticGradientExpressionStructure) {
  ExprDag parsed = parse(
      "var X : mn (4,3)\n"
      "var w : n (3)\n"
      "X' * (elem_inverse(exp(X*w) + 1) .* exp(X*w))\n");
  // Built by hand: Xw -> exp (shared) -> +1 -> inverse -> .* exp -> X' *.
  ExprDag want;
  NodeId X = want.variable("X", IndexSet({{"m", 4}, {"n", 3}}));
  NodeId w = want.variable("w", IndexSet({{"n", 3}}));
  NodeId e = want.elem_unary("exp", want.einsum(X, {"m", "n"}, w, {"n"}, {"m"}));
  NodeId inv = want.elem_unary("elem_inverse", want.add(e, want.fill(1.0, IndexSet({{"m", 4}}))));
  NodeId had = want.einsum(inv, {"m"}, e, {"m"}, {"m"});
  want.add_output(want.einsum(X, {"m", "n"}, had, {"m"}, {"n"}));
  EXPECT_EQ(structure(parsed), structure(want));
  EXPECT_EQ(parsed.node_count(), want.node_count());
  EXPECT_EQ(parsed.node(parsed.outputs()[0]).index_set, IndexSet({{"n", 3}}));
}

TEST(Parse, MatrixNotationDesugaring) {
  ExprDag d = parse(
      "var A : ij (2,3)\nvar B : jk (3,4)\nvar x : i (2)\nvar y : i (2)\nvar z : j (3)\n"
      "y * z'\nA * z\ny' * x\nA * B\ny .* x\nA .* A\nA * diag(x)\n");
  ASSERT_EQ(d.outputs().size(), 7u);
  EXPECT_EQ(signature(d, 0), "i,j->ij");
  EXPECT_EQ(signature(d, 1), "ij,j->i");
  EXPECT_EQ(signature(d, 2), "i,i->");
  EXPECT_EQ(signature(d, 3), "ij,jk->ik");
  EXPECT_EQ(signature(d, 4), "i,i->i");
  EXPECT_EQ(signature(d, 5), "ij,ij->ij");
  EXPECT_EQ(signature(d, 6), "ij,i->ij");
}

TEST(Parse, ExplicitEinsumEqualsBuilder) {
  ExprDag d = parse("var A : ij (2,3)\nvar x : j (3)\neinsum(ij,j->i; A, x)\n");
  ExprDag want;
  NodeId A = want.variable("A", IndexSet({{"i", 2}, {"j", 3}}));
  NodeId x = want.variable("x", IndexSet({{"j", 3}}));
  want.add_output(make_einsum(want, A, IndexSet({{"i", 2}, {"j", 3}}), x, IndexSet({{"j", 3}}),
                              IndexSet({{"i", 2}})));
  EXPECT_EQ(d.fingerprint(), want.fingerprint());
  EXPECT_NE(print_expr(d).find("ij,j->i"), std::string::npos);
}

TEST(Parse, LetCommentsAndHigherRankForms) {
  ExprDag d = parse(
      "# a comment\n"
      "var T : abc (2,3,4)\n"
      "let P = transpose(T; cab)\n"
      "P\n"
      "delta(ab|cd; 2,3)\n"
      "sum(T) + 2\n");
  ASSERT_EQ(d.outputs().size(), 3u);
  EXPECT_EQ(d.node(d.outputs()[0]).index_set.dims(), (std::vector<std::int64_t>{4, 2, 3}));
  const Node& delta = d.node(d.outputs()[1]);
  EXPECT_EQ(delta.kind, NodeKind::Delta);
  EXPECT_EQ(delta.index_set.dims(), (std::vector<std::int64_t>{2, 3, 2, 3}));
  EXPECT_EQ(d.node(d.outputs()[2]).index_set.rank(), 0u);
  EXPECT_NE(print_expr(d).find("delta(ab|cd"), std::string::npos);
}

TEST(Parse, Errors) {
  EXPECT_EQ(code_of("var x : i (2)\nx + \n"), ErrorCode::SyntaxError);
  EXPECT_EQ(code_of("var x : i (2)\nq\n"), ErrorCode::UnknownIdentifier);
  EXPECT_EQ(code_of("var x : i (2)\nfrobnicate(x)\n"), ErrorCode::UnknownIdentifier);
  EXPECT_EQ(code_of("var x : i (2)\nvar y : i (3)\nx + y\n"), ErrorCode::DimMismatch);
  EXPECT_EQ(code_of("var T : abc (2,2,2)\nT * T\n"), ErrorCode::SyntaxError);
  EXPECT_EQ(code_of("var T : abc (2,2,2)\nT'\n"), ErrorCode::SyntaxError);
  EXPECT_EQ(code_of("var x : ii (2,2)\nx\n"), ErrorCode::DuplicateIndex);
  try {
    parse("var x : i (2)\n\n  x ) x\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.column(), 5);
  }
}

TEST(Print, RoundTripsRandomDags) {
  std::mt19937_64 rng(55);
  for (int t = 0; t < 300; ++t) {
    auto r = random_dag(rng);
    if (r.dag.outputs().empty()) continue;
    const std::string text = print_expr(r.dag);
    ExprDag back = parse(text);
    EXPECT_EQ(back.fingerprint(), r.dag.fingerprint()) << text;
    EXPECT_EQ(print_expr(back), text);
    EXPECT_TRUE(bit_identical(eval_output(back, r.env), eval_output(r.dag, r.env)));
  }
}

TEST(Print, NumbersRoundTripExactly) {
  for (double v : {0.1, -2.5, 1e-300, 6.02214076e23, 1.0 / 3.0}) {
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
  ExprDag d = parse("var x : i (2)\n0.1 * x + tensor(i; 2; 0.3, -7e-5)\n");
  EXPECT_EQ(print_expr(parse(print_expr(d))), print_expr(d));
}
