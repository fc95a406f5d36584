#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace touchloc {

// Probability vector over grid indices; always sums to 1.
struct PoseDistribution {
  std::vector<double> probs;
  std::string grid_hash;

  size_t size() const { return probs.size(); }
  // Highest-probability index, ties to the lowest index.
  size_t argmax() const;
  double entropy() const;  // natural log
  // Checks nonnegativity and normalization within tol; throws ZeroPosterior /
  // DimensionMismatch style errors via ConfigError on violation.
  void validate(double tol = 1e-6) const;
};

}  // namespace touchloc
