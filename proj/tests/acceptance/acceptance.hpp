#pragma once

#include <string>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome pg_moments();
Outcome nb_approximation();
Outcome ffbs();
Outcome gibbs_stationarity();
Outcome cluster_recovery();
Outcome calibration();
Outcome metric_oracles();
Outcome sihr();
Outcome leakage_audit();
Outcome end_to_end();

}  // namespace acceptance
