// Usage: acceptance [criterion...]; with no arguments every criterion runs.
// Prints one PASS/FAIL line per criterion; exit status is the failure count.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <vector>

#include "acceptance.hpp"

namespace {

struct Criterion {
  int id;
  const char* name;
  acceptance::Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "pg-moments", acceptance::pg_moments},
    {2, "nb-approximation", acceptance::nb_approximation},
    {3, "ffbs", acceptance::ffbs},
    {4, "gibbs-stationarity", acceptance::gibbs_stationarity},
    {5, "cluster-recovery", acceptance::cluster_recovery},
    {6, "calibration", acceptance::calibration},
    {7, "metric-oracles", acceptance::metric_oracles},
    {8, "sihr", acceptance::sihr},
    {9, "leakage-audit", acceptance::leakage_audit},
    {10, "end-to-end", acceptance::end_to_end},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int a = 1; a < argc; ++a) wanted.push_back(std::atoi(argv[a]));
  if (wanted.empty())
    for (const auto& c : kCriteria) wanted.push_back(c.id);

  int failed = 0;
  for (int id : wanted) {
    const Criterion* c = nullptr;
    for (const auto& k : kCriteria)
      if (k.id == id) c = &k;
    if (!c) {
      std::printf("FAIL %d unknown criterion\n", id);
      ++failed;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    acceptance::Outcome out;
    try {
      out = c->run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %d %s [%.1fs] %s\n", out.pass ? "PASS" : "FAIL", c->id, c->name, secs,
                out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  return failed;
}
