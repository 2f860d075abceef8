#include <gtest/gtest.h>

#include <sstream>

#include "tacseg/gradcheck.hpp"
#include "tacseg/gradcheck_suites.hpp"

namespace tacseg {
namespace {

TEST(GradCheckOps, AllOpsPassOverFiveSeeds) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    for (const GradCheckCase& c : ops_cases(seed)) {
      GradCheckResult r = check_gradients(c, 1e-5);
      EXPECT_LT(r.max_rel_err, 1e-4)
          << "op " << c.name << " seed " << seed << " worst leaf "
          << r.worst_leaf << "[" << r.worst_index << "]";
    }
  }
}

TEST(GradCheckOps, CoversEveryDifferentiableOp) {
  std::vector<std::string> names;
  for (const GradCheckCase& c : ops_cases(1)) names.push_back(c.name);
  for (const char* want :
       {"add", "mul", "mul_scalar", "relu", "matmul", "transpose2d", "reshape",
        "softmax_rows", "layer_norm", "conv2d", "mean_pool2x2",
        "upsample_nearest2x", "concat_channels", "concat_cols", "slice_cols",
        "add_row_bias", "add_channel_bias", "im2patches", "sum_all",
        "bce_with_logits"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end())
        << "missing ops-scope case for " << want;
  }
}

// The harness itself must catch a wrong backward: corrupt one analytic entry
// and require a failure naming the case and leaf.
TEST(GradCheckHarness, FlagsInjectedWrongBackward) {
  GradCheckCase c;
  c.name = "deliberately_wrong";
  c.leaf_names = {"x"};
  c.leaves = {Tensor({2, 2}, {0.3, -0.7, 1.1, 0.4})};
  c.build = [](Graph& g, const std::vector<NodeId>& ids) {
    return g.sum_all(g.softmax_rows(ids[0]));
  };

  Graph g;
  std::vector<NodeId> ids;
  for (std::size_t i = 0; i < c.leaves.size(); ++i)
    ids.push_back(g.param(c.leaf_names[i], c.leaves[i]));
  GradMap analytic = g.backward(c.build(g, ids));
  analytic.at("x")[2] += 0.5;  // corrupt one entry

  GradCheckResult r = compare_against_fd(c, analytic, 1e-5);
  EXPECT_FALSE(r.pass(1e-4));
  EXPECT_EQ(r.case_name, "deliberately_wrong");
  EXPECT_EQ(r.worst_leaf, "x");
  EXPECT_EQ(r.worst_index, 2u);
}

TEST(GradCheckScopes, FusionBlockEndToEndPass) {
  std::ostringstream os;
  for (GradScope scope :
       {GradScope::kFusion, GradScope::kBlock, GradScope::kEnd2End}) {
    ScopeReport rep = run_gradcheck_scope(scope, {1, 2, 3, 4, 5}, os);
    EXPECT_TRUE(rep.pass) << grad_scope_name(scope) << ":\n" << os.str();
    EXPECT_LT(rep.max_rel_err, 1e-4);
  }
}

TEST(GradCheckScopes, ReportNamesEveryCase) {
  std::ostringstream os;
  run_gradcheck_scope(GradScope::kOps, {1}, os);
  const std::string text = os.str();
  EXPECT_NE(text.find("ops/matmul"), std::string::npos);
  EXPECT_NE(text.find("ops/conv2d"), std::string::npos);
  EXPECT_NE(text.find("max_rel_err"), std::string::npos);
}

}  // namespace
}  // namespace tacseg
