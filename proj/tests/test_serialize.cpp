#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "random_dag.hpp"
#include "support.hpp"
#include "tensorcalc/serialize.hpp"

using namespace tctest;

TEST(DagJson, RoundTripsRandomDags) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    auto r = random_dag(rng);
    if (r.dag.outputs().empty()) continue;
    const std::string text = dag_to_json(r.dag);
    ExprDag back = dag_from_json(text);
    EXPECT_EQ(back.fingerprint(), r.dag.fingerprint());
    EXPECT_EQ(dag_to_json(back), text);
    EXPECT_TRUE(bit_identical(eval_output(back, r.env), eval_output(r.dag, r.env)));
  }
}

TEST(DagJson, KeepsConstTensorsBitExact) {
  ExprDag d = parse("var x : i (3)\nx + tensor(i; 3; 0.1, 1e-310, -3.3333333333333335)\n");
  ExprDag back = dag_from_json(dag_to_json(d));
  Environment env{{"x", tensor({3}, {0, 0, 0})}};
  EXPECT_TRUE(bit_identical(eval_output(back, env), eval_output(d, env)));
}

TEST(DagJson, RejectsMalformedInput) {
  EXPECT_THROW(dag_from_json("{"), Error);
  EXPECT_THROW(dag_from_json(R"({"format":"something-else"})"), Error);
}

TEST(DerivativeJson, CompressedResultRoundTrips) {
  Problem p = make_matfac(5, 2, false, 1);
  auto c = compress(higher_order(p.dag, 0, "U", 2));
  ASSERT_TRUE(c.compression.has_value());
  const std::string text = derivative_to_json(c);
  EXPECT_NE(text.find("\"compression\""), std::string::npos);
  DerivativeResult back = derivative_from_json(text);
  EXPECT_EQ(back.wrt, "U");
  EXPECT_EQ(back.order, 2);
  ASSERT_TRUE(back.compression.has_value());
  EXPECT_EQ(back.compression->full_labels, c.compression->full_labels);
  EXPECT_TRUE(bit_identical(eval_result(expand(back), p.env), eval_result(expand(c), p.env)));
  EXPECT_EQ(derivative_to_json(back), text);
}

TEST(DerivativeJson, PlainResultRoundTrips) {
  Problem p = make_logreg(3, 1);
  auto g = differentiate(p.dag, 0, "w", DiffMode::Reverse);
  DerivativeResult back = derivative_from_json(derivative_to_json(g));
  EXPECT_FALSE(back.compression.has_value());
  EXPECT_TRUE(bit_identical(eval_result(back, p.env), eval_result(g, p.env)));
}

TEST(TensorFormats, JsonAndBinaryRoundTrip) {
  std::mt19937_64 rng(2);
  for (const auto& dims : std::vector<std::vector<std::int64_t>>{{}, {3}, {2, 3}, {2, 1, 4}}) {
    DenseTensor t = random_uniform(dims, rng);
    EXPECT_TRUE(bit_identical(tensor_from_json(tensor_to_json(t)), t));
    const std::string bin = tensor_to_tct1(t);
    EXPECT_EQ(bin.substr(0, 4), "TCT1");
    EXPECT_EQ(bin.size(), 4 + 4 + 8 * dims.size() + 8 * t.size());
    EXPECT_TRUE(bit_identical(tensor_from_tct1(bin), t));
  }
  EXPECT_THROW(tensor_from_tct1("TCT1\x01"), Error);
  EXPECT_THROW(tensor_from_json(R"({"dims":[2],"data":[1,2,3]})"), Error);
}

TEST(TensorFormats, FilesByExtension) {
  const auto dir = std::filesystem::temp_directory_path();
  const DenseTensor t = tensor({2, 2}, {1.5, -2, 1e-9, 4});
  for (const char* name : {"tc_test.json", "tc_test.tct"}) {
    const std::string path = (dir / name).string();
    save_tensor(path, t);
    EXPECT_TRUE(bit_identical(load_tensor(path), t));
    std::remove(path.c_str());
  }
}

TEST(EnvironmentJson, RoundTrips) {
  Environment env{{"a", tensor({2}, {1, 2})}, {"b", DenseTensor::scalar(0.25)}};
  Environment back = environment_from_json(environment_to_json(env));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(bit_identical(back["a"], env["a"]));
  EXPECT_TRUE(bit_identical(back["b"], env["b"]));
}

TEST(Dot, MarksOutputsAndHighOrderNodes) {
  ExprDag d = parse("var x : i (2)\ndelta(ab|cd; 2,2)\nexp(x)\n");
  const std::string dot = dag_to_dot(d);
  EXPECT_NE(dot.find("digraph"), std::string::npos);
  EXPECT_NE(dot.find("color=red"), std::string::npos);
  EXPECT_NE(dot.find("peripheries=2"), std::string::npos);
}
