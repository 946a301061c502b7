#pragma once

#include <string>
#include <vector>

namespace hdpde::bench {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Estimator and operator property checks that need no training.
CriterionResult check_sdgd_unbiased();
CriterionResult check_hte_unbiased();
CriterionResult check_variance_split();
CriterionResult check_random_difference();
CriterionResult check_martingale_bridge();
CriterionResult check_rs_identities();
CriterionResult check_autodiff();

std::vector<CriterionResult> property_suite();

std::string format(const CriterionResult& r);

}  // namespace hdpde::bench
