#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pcnn/model.hpp"

namespace pcnn {
namespace gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_err;
  double threshold;
  bool pass;
};

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

// central difference d loss / d buf[i] with step h
inline double central_diff(std::vector<double>& buf, size_t i,
                           const std::function<double()>& loss, double h = 1e-5) {
  const double saved = buf[i];
  buf[i] = saved + h;
  const double fp = loss();
  buf[i] = saved - h;
  const double fm = loss();
  buf[i] = saved;
  return (fp - fm) / (2 * h);
}

// Every check compares the analytic backward of a scalar loss (a fixed random
// weighting of the output) against central differences of the forward, in
// 64-bit. Returns the max relative error over all checked elements.

CheckResult check_conv(uint64_t seed = 7);
CheckResult check_pool(uint64_t seed = 7);
CheckResult check_relu(uint64_t seed = 7);
CheckResult check_dropout(uint64_t seed = 7);
CheckResult check_dense(uint64_t seed = 7);
CheckResult check_softmax(uint64_t seed = 7);
CheckResult check_model(uint64_t seed = 7);

std::vector<CheckResult> run_all(uint64_t seed = 7);

// oracle-equivalence sweeps (exact comparisons against direct-loop references)
CheckResult check_conv_oracle(int trials = 50, uint64_t seed = 11);
CheckResult check_matmul_oracle(int trials = 100, uint64_t seed = 13);
CheckResult check_im2col_adjoint(int trials = 100, uint64_t seed = 17);

}  // namespace gradcheck
}  // namespace pcnn
