#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "kilab/estimators.hpp"
#include "kilab/geometry.hpp"

namespace kilab {

/// Two-layer ReLU network f(x) = sqrt(2/m) sum_r a_r relu(w_r . x).
struct NetworkState {
  int width = 0;
  int dim = 0;
  Eigen::MatrixXd w;  // width x dim
  Eigen::VectorXd a;  // width

  double scale() const { return std::sqrt(2.0 / width); }
  Eigen::VectorXd forward(const Points& X) const;
};

struct NetworkGradient {
  Eigen::MatrixXd w;
  Eigen::VectorXd a;
};

/// i.i.d. N(0,1) first half, second half mirrored: a_{l+r} = -a_r,
/// w_{l+r} = w_r, so f(x; theta(0)) = 0 for every x.
NetworkState init_symmetric(int width, int dim, std::uint64_t seed);

/// L(theta) = 1/(2n) sum_i (y_i - f(x_i))^2.
double training_loss(const NetworkState& net, const Points& X, const Eigen::VectorXd& Y);

/// Analytic dL/dtheta; relu'(0) is taken to be 0.
NetworkGradient loss_gradient(const NetworkState& net, const Points& X, const Eigen::VectorXd& Y);

struct TrainOptions {
  double eta = 1.0;
  std::size_t steps = 1000;
  /// Stop once L < tolerance.
  double tolerance = 1e-8;
  /// Halve eta (and retry the step) whenever the loss would increase.
  bool adaptive = true;
  /// Optional points at which to snapshot predictions at steps 0, 1, 2, 4, ...
  std::optional<Points> eval_grid;
};

struct TrainCheckpoint {
  std::size_t step = 0;
  double loss = 0.0;
  Eigen::VectorXd predictions;
};

struct TrainTrace {
  double eta_initial = 0.0;
  double eta_final = 0.0;
  std::size_t steps_taken = 0;
  std::vector<double> loss_history;       // loss before step 0, then after each step
  std::vector<std::size_t> halvings;      // step indices at which eta was halved
  std::vector<TrainCheckpoint> checkpoints;
  NetworkState final_state;
  bool converged = false;
};

/// Full-batch gradient descent on L. Raises DivergenceError when the loss
/// exceeds 1e6 times its initial value (non-adaptive mode) or when step
/// halving cannot restore descent.
TrainTrace train_gd(NetworkState state, const Points& X, const Eigen::VectorXd& Y, const TrainOptions& options);

/// Minimum-norm interpolation with the two-layer NTK.
FitResult ntk_interpolator(const Points& X, const Eigen::VectorXd& Y, unsigned workers = 1);

/// max over the grid of |f_NN(x) - f_NTK(x)|.
double sup_gap(const NetworkState& net, const FitResult& ntk_fit, const Points& eval_grid, unsigned workers = 1);

struct EmpiricalNtk {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Tangent kernel of the network at its current parameters,
/// sum_theta df(x)/dtheta df(y)/dtheta, with a standard error computed over
/// the independent first half of the neurons.
EmpiricalNtk empirical_ntk(const NetworkState& net, PointRef x, PointRef y);

}  // namespace kilab
