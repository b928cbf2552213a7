#pragma once

#include "vitac/fem/distance.hpp"
#include "vitac/fem/neo_hookean.hpp"

namespace vitac {

// Log barrier on the squared distance D with support D < Dh = dhat^2:
//   b(D) = -((D - Dh) / Dh)^2 * ln(D / Dh)
// A pair contributes kappa * weight * dhat * b(D), weight being an area (m^2).

inline double barrier(double d_sq, double dhat) {
  const double dh = dhat * dhat;
  if (d_sq >= dh) return 0.0;
  const double r = (d_sq - dh) / dh;
  return -r * r * std::log(d_sq / dh);
}

inline double barrier_first(double d_sq, double dhat) {
  const double dh = dhat * dhat;
  if (d_sq >= dh) return 0.0;
  const double r = (d_sq - dh) / dh;
  return -2.0 * r / dh * std::log(d_sq / dh) - r * r / d_sq;
}

inline double barrier_second(double d_sq, double dhat) {
  const double dh = dhat * dhat;
  if (d_sq >= dh) return 0.0;
  const double diff = d_sq - dh;
  return -2.0 * std::log(d_sq / dh) / (dh * dh) - 4.0 * diff / (dh * dh * d_sq) +
         diff * diff / (dh * dh * d_sq * d_sq);
}

/// Energy of a single pair at distance d: the closed form of the barrier above.
inline double pair_barrier_energy(double distance, double dhat, double kappa, double weight) {
  return kappa * weight * dhat * barrier(distance * distance, dhat);
}

struct PairBarrier {
  double energy = 0.0;
  double d_sq = 0.0;
  Vec12 gradient = Vec12::Zero();
  Mat12 hessian = Mat12::Zero();
};

/// Barrier energy, gradient and (by default PSD-projected) Hessian of one pair
/// over its 12 coordinates (PT: p, t0, t1, t2; EE: a0, a1, b0, b1).
inline PairBarrier pair_barrier(const DistanceStencil& s, const std::array<Vec3, 4>& x, double weight, double kappa,
                                double dhat, bool with_hessian, bool project = true) {
  PairBarrier out;
  const double scale = kappa * weight * dhat;
  if (!with_hessian) {
    out.d_sq = stencil_squared_distance(s, x);
    out.energy = scale * barrier(out.d_sq, dhat);
    return out;
  }
  const PairDerivatives d = stencil_derivatives(s, x);
  out.d_sq = d.value;
  if (d.value >= dhat * dhat) return out;
  const double b1 = barrier_first(d.value, dhat), b2 = barrier_second(d.value, dhat);
  out.energy = scale * barrier(d.value, dhat);
  out.gradient = scale * b1 * d.gradient;
  out.hessian = scale * (b2 * d.gradient * d.gradient.transpose() + b1 * d.hessian);
  if (project) out.hessian = project_psd<12>(out.hessian);
  return out;
}

/// Gradient only (no Hessian work), used for force reporting and checks.
inline PairBarrier pair_barrier_gradient(const DistanceStencil& s, const std::array<Vec3, 4>& x, double weight,
                                         double kappa, double dhat) {
  PairBarrier out;
  const PairDerivatives d = stencil_derivatives(s, x);
  out.d_sq = d.value;
  if (d.value >= dhat * dhat) return out;
  const double scale = kappa * weight * dhat;
  out.energy = scale * barrier(d.value, dhat);
  out.gradient = scale * barrier_first(d.value, dhat) * d.gradient;
  return out;
}

}  // namespace vitac
