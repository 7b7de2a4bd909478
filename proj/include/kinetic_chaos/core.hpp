#pragma once

#include <utility>
#include <vector>

#include "kinetic_chaos/types.hpp"

namespace kc {

using Velocity = std::vector<double>;

// Elastic exchange along the unit normal omega:
//   vi* = vi + omega (omega . (vj - vi)),  vj* = vj - omega (omega . (vj - vi)).
std::pair<Velocity, Velocity> collide(const Velocity& vi, const Velocity& vj, const Velocity& omega);

// In-place variant used by the flow; omega is trusted to be unit.
inline void collide_in_place(double* vi, double* vj, const double* omega, int d) {
    double c = 0;
    for (int k = 0; k < d; ++k) c += omega[k] * (vj[k] - vi[k]);
    for (int k = 0; k < d; ++k) {
        vi[k] += omega[k] * c;
        vj[k] -= omega[k] * c;
    }
}

Functionals functionals(const PhasePoint& z);

// Every pair at distance >= eps (up to a relative tolerance on the squared distance).
bool is_admissible(const PhasePoint& z, double eps, double rel_tol = 1e-9);

// inf over tau in R of |x - v tau|; |x| when v = 0.
double line_distance(const double* dx, const double* dv, int d);

// Free backward streaming never brings a pair into contact.
bool in_K(const PhasePoint& z, double eps, double slack = 0.0);
// All relative speeds exceed eta.
bool in_U_eta(const PhasePoint& z, double eta, double slack = 0.0);
// Refined dispersion set; requires 0 < eta < 1.
bool in_tilde_U_eta(const PhasePoint& z, double eta, double slack = 0.0);
// Only particles 1 and 2 (indices 0, 1) may interact under the backward flow,
// and no straight-line branch of theirs comes within eps of another particle.
bool in_G(const PhasePoint& z, double eps, double slack = 0.0);
// Velocity gaps stay above eta across the whole backward history.
bool in_hat_U_eta(const PhasePoint& z, double eta, double eps, double slack = 0.0);

}  // namespace kc
