#pragma once

#include <span>
#include <vector>

namespace kilab {

/// Gauss rule on [-1, 1] for the weight (1 - t^2)^alpha, normalized so the
/// weights sum to one (probability measure).
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Golub-Welsch nodes polished by Newton; weights from Christoffel numbers.
/// Exact for polynomials of degree <= 2*count - 1.
GaussRule gauss_gegenbauer(int count, double alpha);

/// Legendre polynomials of dimension d (Gegenbauer with index (d-2)/2)
/// normalized to P_n(1) = 1. Writes P_0..P_{out.size()-1} at t.
void sphere_legendre_all(int dim, double t, std::span<double> out);

double sphere_legendre(int degree, int dim, double t);

/// Dimension of degree-n spherical harmonics on S^{d-1}:
/// (2n + d - 2)/(n + d - 2) * binom(n + d - 2, n).
double harmonic_multiplicity(int degree, int dim);

}  // namespace kilab
