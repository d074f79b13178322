#pragma once

#include <string>

#include "decoh/types.hpp"

namespace decoh {

// Coherence-index quantities for the position (X) and momentum (K) families.
// C is a commutator norm and D a centered anticommutator norm, both divided
// by the Hilbert-Schmidt norm of the state; S = C / D.
struct IndexReport {
    double C_X = 0.0;
    double D_X = 0.0;
    double S_X = 0.0;
    double C_K = 0.0;
    double D_K = 0.0;
    double S_K = 0.0;
    PhaseVec mean_x;
    PhaseVec mean_k;
    double hs_norm = 0.0;

    int grid_points = 0;
    double grid_half_width = 0.0;
    int grid_doublings = 0;
    double boundary_tol = 0.0;
    std::string convention = kWeylConvention;

    double cx_dk() const { return C_X * D_K; }
    double ck_dx() const { return C_K * D_X; }
};

}  // namespace decoh
