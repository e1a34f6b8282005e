#include <gtest/gtest.h>

#include "support.hpp"

using namespace tctest;

namespace {

IndexSet ij(std::int64_t i, std::int64_t j) { return IndexSet({{"i", i}, {"j", j}}); }
IndexSet vec(const char* l, std::int64_t n) { return IndexSet({{l, n}}); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(IndexSet, RejectsDuplicatesAndBadExtents) {
  EXPECT_EQ(code_of([] { IndexSet({{"i", 2}, {"i", 2}}); }), ErrorCode::DuplicateIndex);
  EXPECT_EQ(code_of([] { IndexSet({{"i", 0}}); }), ErrorCode::DimMismatch);
  EXPECT_EQ(code_of([] { ij(2, 3).concat(vec("j", 3)); }), ErrorCode::DuplicateIndex);
  EXPECT_EQ(ij(2, 3).concat(vec("k", 4)).to_string(), "i:2,j:3,k:4");
}

TEST(IndexSet, SplitsLabelsWithDigits) {
  EXPECT_EQ(split_labels("ij"), (Labels{"i", "j"}));
  EXPECT_EQ(split_labels("i1jq22"), (Labels{"i1", "j", "q22"}));
  EXPECT_TRUE(split_labels("").empty());
}

TEST(MakeEinsum, StandardSignatures) {
  ExprDag d;
  NodeId A = d.variable("A", ij(2, 3));
  NodeId x = d.variable("x", vec("j", 3));
  NodeId y = d.variable("y", vec("i", 2));
  NodeId mv = make_einsum(d, A, ij(2, 3), x, vec("j", 3), vec("i", 2));
  EXPECT_EQ(d.node(mv).s1.labels(), (Labels{"i", "j"}));
  EXPECT_EQ(d.node(mv).s2.labels(), (Labels{"j"}));
  EXPECT_EQ(d.node(mv).index_set, vec("i", 2));
  NodeId inner = make_einsum(d, y, vec("i", 2), y, vec("i", 2), IndexSet{});
  EXPECT_EQ(d.node(inner).order(), 0u);
  NodeId scaled = make_einsum(d, A, ij(2, 3), y, vec("i", 2), ij(2, 3));
  EXPECT_EQ(d.node(scaled).index_set, ij(2, 3));
}

TEST(MakeEinsum, Errors) {
  ExprDag d;
  NodeId A = d.variable("A", ij(2, 3));
  NodeId B = d.variable("B", IndexSet({{"j", 3}, {"k", 4}}));
  EXPECT_EQ(code_of([&] { d.einsum(A, {"i", "j"}, B, {"j", "k"}, {"i", "l"}); }), ErrorCode::BadOutputIndex);
  EXPECT_EQ(code_of([&] { d.einsum(A, {"i", "i"}, B, {"j", "k"}, {"i"}); }), ErrorCode::DuplicateIndex);
  EXPECT_EQ(code_of([&] { d.einsum(A, {"i", "j"}, B, {"j", "k"}, {"i", "i"}); }), ErrorCode::DuplicateIndex);
  // i binds extent 2 on A but 3 on B.
  EXPECT_EQ(code_of([&] { d.einsum(A, {"i", "j"}, B, {"i", "k"}, {"k"}); }), ErrorCode::DimMismatch);
}

TEST(InferShape, Examples) {
  ExprDag d;
  NodeId A = d.variable("A", ij(2, 3));
  NodeId B = d.variable("B", IndexSet({{"j", 3}, {"k", 4}}));
  EXPECT_EQ(infer_shape(d, d.einsum(A, {"i", "j"}, B, {"j", "k"}, {"i", "k"})), IndexSet({{"i", 2}, {"k", 4}}));
  NodeId v = d.variable("v", vec("i", 5));
  EXPECT_EQ(infer_shape(d, d.add(v, v)), vec("i", 5));
  NodeId s = d.variable("s", vec("i", 7));
  EXPECT_EQ(infer_shape(d, d.gen_unary("softmax", s)), vec("i", 7));
}

TEST(HashConsing, SameExpressionSameNode) {
  ExprDag d;
  NodeId A = d.variable("A", ij(2, 3));
  NodeId x = d.variable("x", vec("j", 3));
  NodeId e1 = d.elem_unary("exp", d.einsum(A, {"i", "j"}, x, {"j"}, {"i"}));
  const auto before = d.store_size();
  NodeId e2 = d.elem_unary("exp", d.einsum(A, {"i", "j"}, x, {"j"}, {"i"}));
  EXPECT_EQ(e1, e2);
  EXPECT_EQ(d.store_size(), before);
  EXPECT_NE(d.scalar(0.0), d.scalar(-0.0));
}

TEST(RenameIndices, AlphaEquivalence) {
  ExprDag d;
  NodeId A = d.variable("A", ij(2, 2));
  NodeId x = d.variable("x", vec("j", 2));
  NodeId y = d.einsum(A, {"i", "j"}, x, {"j"}, {"i"});
  NodeId r = d.rename_indices(y, {{"i", "a"}, {"j", "b"}});
  EXPECT_EQ(d.node(r).index_set.labels(), (Labels{"a"}));
  Environment env{{"A", tensor({2, 2}, {1, 2, 3, 4})}, {"x", tensor({2}, {5, 6})}};
  EXPECT_TRUE(bit_identical(evaluate_node(d, r, env), evaluate_node(d, y, env)));
  EXPECT_EQ(d.rename_indices(y, {}), y);
  EXPECT_EQ(d.rename_indices(y, {{"i", "i"}, {"j", "j"}}), y);
}

TEST(RenameIndices, Errors) {
  ExprDag d;
  NodeId A = d.variable("A", ij(2, 3));
  NodeId x = d.variable("x", vec("j", 3));
  NodeId y = d.einsum(A, {"i", "j"}, x, {"j"}, {"i"});
  EXPECT_EQ(code_of([&] { d.rename_indices(y, {{"i", "j"}}); }), ErrorCode::DimMismatch);
  NodeId B = d.variable("B", ij(3, 3));
  NodeId z = d.einsum(B, {"i", "j"}, x, {"j"}, {"i"});
  EXPECT_EQ(code_of([&] { d.rename_indices(z, {{"i", "k"}, {"j", "k"}}); }), ErrorCode::NonInjectiveRename);
}

TEST(FreshIndex, NeverCollides) {
  ExprDag empty;
  Index e = empty.fresh_index(4);
  EXPECT_EQ(e.dim, 4);
  ExprDag d;
  d.variable("A", ij(2, 3));
  Index a = d.fresh_index(2), b = d.fresh_index(2);
  EXPECT_NE(a.label, b.label);
  for (const auto& l : {a.label, b.label}) {
    EXPECT_NE(l, "i");
    EXPECT_NE(l, "j");
  }
  // A user label that looks like a fresh one is skipped.
  ExprDag q;
  q.variable("v", vec("q1", 2));
  EXPECT_NE(q.fresh_label(), "q1");
}

TEST(Variables, RedeclarationMustAgree) {
  ExprDag d;
  d.variable("x", vec("i", 2));
  EXPECT_EQ(code_of([&] { d.variable("x", vec("i", 3)); }), ErrorCode::DimMismatch);
}

TEST(UnaryRegistry, BuiltinsPresent) {
  const auto& r = UnaryOpRegistry::instance();
  for (const char* name : {"exp", "log", "relu", "elem_inverse", "elem_square"}) {
    ASSERT_NE(r.find(name), nullptr) << name;
    EXPECT_EQ(r.find(name)->kind, UnaryOp::Kind::Elementwise);
  }
  ASSERT_NE(r.find("softmax"), nullptr);
  EXPECT_EQ(r.find("softmax")->kind, UnaryOp::Kind::General);
  // relu'(0) = 0
  EXPECT_EQ(r.at("relu_grad").scalar(0.0), 0.0);
  EXPECT_EQ(r.at("relu").scalar(-1.0), 0.0);
  EXPECT_EQ(code_of([&] { r.at("tanh"); }), ErrorCode::UnregisteredUnaryOp);
}
