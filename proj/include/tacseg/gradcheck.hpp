#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tacseg/graph.hpp"
#include "tacseg/tensor.hpp"

// Central-finite-difference oracle for the tape's backward pass. The FD side
// uses forward evaluations only, so it stays independent of the analytic
// gradients it checks.

namespace tacseg {

struct GradCheckCase {
  std::string name;
  std::vector<std::string> leaf_names;
  std::vector<Tensor> leaves;
  // Builds the scalar loss from the leaf nodes; must be a pure function of
  // the leaf values.
  std::function<NodeId(Graph&, const std::vector<NodeId>&)> build;
};

struct GradCheckResult {
  std::string case_name;
  double max_rel_err = 0.0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
  bool pass(double tol = 1e-4) const { return max_rel_err < tol; }
};

inline double rel_err(double a, double fd) {
  const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
  return std::abs(a - fd) / denom;
}

inline double eval_case(const GradCheckCase& c,
                        const std::vector<Tensor>& leaves) {
  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i)
    ids.push_back(g.param(c.leaf_names[i], leaves[i]));
  NodeId loss = c.build(g, ids);
  return g.value(loss).item();
}

// Compares a caller-supplied gradient map against fresh finite differences.
// Lets tests verify the harness flags a deliberately wrong backward.
// Entries where both sides sit below abs_tol are treated as matching zeros:
// central differences cannot resolve analytically-zero gradients (e.g. an
// attention key bias, which cancels under softmax shift invariance) beyond
// rounding noise ~1e-10, which the relative error would then amplify.
inline GradCheckResult compare_against_fd(const GradCheckCase& c,
                                          const GradMap& claimed,
                                          double step = 1e-5,
                                          double abs_tol = 0.0) {
  GradCheckResult res;
  res.case_name = c.name;
  std::vector<Tensor> work = c.leaves;
  for (std::size_t li = 0; li < work.size(); ++li) {
    const Tensor& ga = claimed.at(c.leaf_names[li]);
    for (std::size_t i = 0; i < work[li].size(); ++i) {
      const double keep = work[li][i];
      work[li][i] = keep + step;
      const double fp = eval_case(c, work);
      work[li][i] = keep - step;
      const double fm = eval_case(c, work);
      work[li][i] = keep;
      const double fd = (fp - fm) / (2.0 * step);
      if (std::max(std::abs(ga[i]), std::abs(fd)) <= abs_tol) continue;
      const double e = rel_err(ga[i], fd);
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst_leaf = c.leaf_names[li];
        res.worst_index = i;
      }
    }
  }
  return res;
}

inline GradCheckResult check_gradients(const GradCheckCase& c,
                                       double step = 1e-5,
                                       double abs_tol = 0.0) {
  Graph g;
  std::vector<NodeId> ids;
  for (std::size_t i = 0; i < c.leaves.size(); ++i)
    ids.push_back(g.param(c.leaf_names[i], c.leaves[i]));
  NodeId loss = c.build(g, ids);
  GradMap analytic = g.backward(loss);
  return compare_against_fd(c, analytic, step, abs_tol);
}

}  // namespace tacseg
