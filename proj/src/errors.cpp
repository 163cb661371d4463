#include "kilab/errors.hpp"

#include <sstream>

namespace kilab {

namespace {

std::string duplicate_message(std::size_t a, std::size_t b) {
  std::ostringstream os;
  os << "duplicate training inputs at indices " << a << " and " << b
     << "; interpolation requires pairwise distinct points";
  return os.str();
}

std::string singular_message(double e) {
  std::ostringstream os;
  os << "kernel matrix is numerically singular at lambda = 0 (min eigenvalue "
     << e << ")";
  return os.str();
}

std::string divergence_message(std::size_t step, double loss) {
  std::ostringstream os;
  os << "gradient descent diverged (loss " << loss << "); last stable step "
     << step;
  return os.str();
}

}  // namespace

DuplicatePointsError::DuplicatePointsError(std::size_t first, std::size_t second)
    : NumericalError(duplicate_message(first, second)), first_(first), second_(second) {}

InterpolationInfeasible::InterpolationInfeasible(double min_eigenvalue)
    : NumericalError(singular_message(min_eigenvalue)), min_eigenvalue_(min_eigenvalue) {}

DivergenceError::DivergenceError(std::size_t last_stable_step, double loss)
    : NumericalError(divergence_message(last_stable_step, loss)),
      last_stable_step_(last_stable_step) {}

}  // namespace kilab
