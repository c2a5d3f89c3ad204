#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cubflow {

/// Error models for a degree sweep:
///   Exponential   err = C rho^-n        params {C, rho}
///   Algebraic     err = C n^-k          params {C, k}
///   StretchedExp  err = C exp(-c n^a)   params {C, c, a}
enum class RateModel { Exponential, Algebraic, StretchedExp };

std::string to_string(RateModel m);

struct RateCandidate {
  RateModel model;
  std::vector<double> params;
  double residual;  // log-space RMS per degree of freedom
  bool valid;       // parameters inside the model's admissible range
};

struct RateFit {
  RateModel model = RateModel::Exponential;
  std::vector<double> params;
  double residual = 0.0;
  std::vector<std::pair<double, double>> data;  // (n, err) after flooring
  std::vector<RateCandidate> candidates;
  bool floored = false;  // some err <= 0 was floored to 1e-16
  bool valid = false;    // at least one admissible (decaying) model exists

  /// Model error at degree n.
  double predict(double n) const;
};

}  // namespace cubflow
