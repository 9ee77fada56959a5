// Copyright 2026 The uaal Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Special functions used by the evidential loss, and a central-difference
// gradient for verifying analytic derivatives. Everything here is pure.

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "uaal/errors.hpp"

namespace uaal {

namespace detail {

inline void require_positive(double x, const char* fn) {
  if (!(x > 0.0)) {
    throw DomainError(std::string(fn) + ": argument must be > 0, got " +
                      std::to_string(x));
  }
}

// Lanczos approximation, g = 607/128, 15 terms (Godfrey's coefficients).
inline constexpr double kLanczosG = 607.0 / 128.0;
inline constexpr std::array<double, 15> kLanczosCoef = {
    0.99999999999999709182,     57.156235665862923517,
    -59.597960355475491248,     14.136097974741747174,
    -0.49191381609762019978,    .33994649984811888699e-4,
    .46523628927048575665e-4,   -.98374475304879564677e-4,
    .15808870322491248884e-3,   -.21026444172410488319e-3,
    .21743961811521264320e-3,   -.16431810653676389022e-3,
    .84418223983852743293e-4,   -.26190838401581408670e-4,
    .36899182659531622704e-5};

// From here on, ln Γ(x) uses the Stirling series instead of Lanczos.
inline constexpr double kStirlingThreshold = 20.0;

inline double log_gamma_stirling(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Σ B_2n / (2n (2n-1) x^(2n-1))
  const double series =
      inv * (1.0 / 12.0 +
             inv2 * (-1.0 / 360.0 +
                     inv2 * (1.0 / 1260.0 +
                             inv2 * (-1.0 / 1680.0 +
                                     inv2 * (1.0 / 1188.0 +
                                             inv2 * (-691.0 / 360360.0))))));
  return (x - 0.5) * std::log(x) - x + 0.5 * std::log(2.0 * std::numbers::pi) +
         series;
}

inline double log_gamma_lanczos(double x) {
  // Evaluates ln Γ(x) for x ≥ 0.5 as ln Γ(z + 1) with z = x - 1.
  const double z = x - 1.0;
  double sum = kLanczosCoef[0];
  for (std::size_t i = 1; i < kLanczosCoef.size(); ++i) {
    sum += kLanczosCoef[i] / (z + static_cast<double>(i));
  }
  const double t = z + kLanczosG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t +
         std::log(sum);
}

}  // namespace detail

/// Natural log of the gamma function for x > 0.
inline double log_gamma(double x) {
  detail::require_positive(x, "log_gamma");
  if (x == 1.0 || x == 2.0) return 0.0;
  if (x >= detail::kStirlingThreshold) return detail::log_gamma_stirling(x);
  if (x < 0.5) {
    // Γ(x) = Γ(x + 1) / x
    return detail::log_gamma_lanczos(x + 1.0) - std::log(x);
  }
  return detail::log_gamma_lanczos(x);
}

/// ψ(x) = d/dx ln Γ(x). Shifts x upward to ≥ 6 and applies the asymptotic
/// expansion there.
inline double digamma(double x) {
  detail::require_positive(x, "digamma");
  double shift = 0.0;
  while (x < 6.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double tail =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (5.0 / 660.0 -
                                              inv2 * (691.0 / 32760.0 -
                                                      inv2 / 12.0))))));
  return shift + std::log(x) - 0.5 * inv - tail;
}

/// ψ₁(x) = d²/dx² ln Γ(x).
inline double trigamma(double x) {
  detail::require_positive(x, "trigamma");
  double shift = 0.0;
  while (x < 6.0) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // 1/x + 1/(2x²) + Σ B_2n / x^(2n+1)
  const double series =
      inv * (1.0 + inv * 0.5 +
             inv2 * (1.0 / 6.0 -
                     inv2 * (1.0 / 30.0 -
                             inv2 * (1.0 / 42.0 -
                                     inv2 * (1.0 / 30.0 -
                                             inv2 * (5.0 / 66.0 -
                                                     inv2 * (691.0 / 2730.0 -
                                                             inv2 * 7.0 / 6.0)))))));
  return shift + series;
}

/// Central differences (f(x + h eᵢ) - f(x - h eᵢ)) / 2h for every
/// coordinate of x. Exceptions thrown by f propagate.
template <class F>
std::vector<double> finite_difference_gradient(F&& f, std::span<const double> x,
                                               double h) {
  if (!(h > 0.0)) throw DomainError("finite_difference_gradient: h must be > 0");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(std::span<const double>(point));
    point[i] = saved - h;
    const double down = f(std::span<const double>(point));
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace uaal
