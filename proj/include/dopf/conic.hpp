#pragma once

#include "dopf/conic/ipm.hpp"
#include "dopf/conic/program.hpp"
#include "dopf/conic/simplex.hpp"

namespace dopf::conic {

/// Validates the program and dispatches to the configured backend.
inline SolveReport solve(const ConicProgram& prog, const SolverSettings& settings = {}) {
  prog.validate();
  switch (settings.backend) {
    case Backend::Simplex: return solve_simplex(prog, settings);
    case Backend::InteriorPoint: break;
  }
  return solve_interior_point(prog, settings);
}

}  // namespace dopf::conic
