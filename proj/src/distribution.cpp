#include "touchloc/distribution.hpp"

#include <cmath>

#include "touchloc/errors.hpp"

namespace touchloc {

size_t PoseDistribution::argmax() const {
  if (probs.empty()) throw EmptyGrid("argmax of empty distribution");
  size_t best = 0;
  for (size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

double PoseDistribution::entropy() const {
  double h = 0;
  for (double p : probs) {
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

void PoseDistribution::validate(double tol) const {
  double sum = 0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ConfigError("distribution has negative or non-finite mass");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw ConfigError("distribution sums to " + std::to_string(sum));
  }
}

}  // namespace touchloc
