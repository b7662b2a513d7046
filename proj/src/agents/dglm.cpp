#include <cmath>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/polygamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "mbps/agents.hpp"

namespace mbps {

LogMoments log_moments(const GammaParams& g) {
  if (!(g.shape > 0.0) || !(g.rate > 0.0) || !std::isfinite(g.shape) || !std::isfinite(g.rate))
    throw DomainError("log_moments: gamma shape and rate must be positive and finite");
  return {boost::math::digamma(g.shape) - std::log(g.rate), boost::math::trigamma(g.shape)};
}

GammaParams gamma_from_log_moments(double mean, double var) {
  if (!std::isfinite(mean) || !(var > 0.0) || !std::isfinite(var))
    throw DomainError("gamma_from_log_moments: need finite mean and positive variance");
  // trigamma is convex and decreasing and trigamma(1/v) > v, so Newton from
  // 1/v increases monotonically to the root.
  double a = 1.0 / var;
  int it = 0;
  for (; it < 200; ++it) {
    const double g = boost::math::trigamma(a) - var;
    const double step = g / boost::math::polygamma(2, a);
    a -= step;
    if (std::abs(step) <= 1e-15 * a) break;
  }
  if (it == 200 || !(a > 0.0))
    throw NumericalError("trigamma inversion did not converge (target variance " +
                         std::to_string(var) + ", last shape " + std::to_string(a) + ")");
  return {a, std::exp(boost::math::digamma(a) - mean)};
}

DglmStep dglm_update(const GaussianState& state, double y, std::span<const double> x,
                     double delta) {
  const auto p = state.mean.size();
  if (static_cast<Eigen::Index>(x.size()) != p)
    throw DomainError("dglm_update: covariate length " + std::to_string(x.size()) +
                      " does not match state dimension " + std::to_string(p));
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("dglm_update: discount outside (0, 1]");
  if (!(y >= 0.0) || !std::isfinite(y)) throw DomainError("dglm_update: bad count");

  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), p);
  const Eigen::MatrixXd R = state.cov / delta;
  const Eigen::VectorXd Rx = R * xv;
  DglmStep out;
  out.f = xv.dot(state.mean);
  out.q = xv.dot(Rx);

  const GammaParams prior = gamma_from_log_moments(out.f, out.q);
  const LogMoments post = log_moments({prior.shape + y, prior.rate + 1.0});
  out.posterior.mean = state.mean + Rx * ((post.mean - out.f) / out.q);
  out.posterior.cov = R - (Rx * Rx.transpose()) * ((1.0 - post.var / out.q) / out.q);
  out.posterior.cov = 0.5 * (out.posterior.cov + out.posterior.cov.transpose());
  return out;
}

}  // namespace mbps
