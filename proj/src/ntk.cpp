#include "kilab/ntk.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "kilab/errors.hpp"
#include "kilab/random.hpp"

namespace kilab {

namespace {

constexpr int kMaxConsecutiveHalvings = 60;

struct Forward {
  Eigen::MatrixXd pre;  // n x m, X W^T
  Eigen::VectorXd f;
  double loss = 0.0;
};

// The two halves of the width are summed separately in identically laid-out
// buffers, so a mirrored network evaluates to exactly zero.
Eigen::VectorXd readout(const NetworkState& net, const Eigen::MatrixXd& pre) {
  const Eigen::Index h = net.width / 2;
  const Eigen::MatrixXd lo = pre.leftCols(h).array().max(0.0).matrix();
  const Eigen::MatrixXd hi = pre.rightCols(h).array().max(0.0).matrix();
  const Eigen::VectorXd a_lo = net.a.head(h), a_hi = net.a.tail(h);
  const Eigen::VectorXd f_lo = lo * a_lo, f_hi = hi * a_hi;
  return net.scale() * (f_lo + f_hi);
}

Forward run_forward(const NetworkState& net, const Points& X, const Eigen::VectorXd& Y) {
  Forward out;
  out.pre = X * net.w.transpose();
  out.f = readout(net, out.pre);
  out.loss = 0.5 * (Y - out.f).squaredNorm() / static_cast<double>(X.rows());
  return out;
}

NetworkGradient gradient_from(const NetworkState& net, const Points& X, const Eigen::VectorXd& Y, const Forward& fw) {
  const double n = static_cast<double>(X.rows());
  const Eigen::VectorXd e = Y - fw.f;
  const double c = -net.scale() / n;
  NetworkGradient g;
  g.a = c * (fw.pre.array().max(0.0).matrix().transpose() * e);
  // mask_ir * e_i * a_r, then contract over samples.
  Eigen::MatrixXd gated = (fw.pre.array() > 0.0).cast<double>().matrix();
  gated = e.asDiagonal() * gated * net.a.asDiagonal();
  g.w = c * (gated.transpose() * X);
  return g;
}

void check_data(const NetworkState& net, const Points& X, const Eigen::VectorXd& Y) {
  if (X.cols() != net.dim) throw ConfigError("network: input dimension mismatch");
  if (Y.size() != X.rows()) throw ConfigError("network: Y size does not match X");
  if (X.rows() == 0) throw ConfigError("network: empty training set");
}

bool is_checkpoint(std::size_t step) { return step == 0 || (step & (step - 1)) == 0; }

}  // namespace

Eigen::VectorXd NetworkState::forward(const Points& X) const {
  if (X.cols() != dim) throw ConfigError("network: input dimension mismatch");
  return readout(*this, X * w.transpose());
}

NetworkState init_symmetric(int width, int dim, std::uint64_t seed) {
  if (width < 2 || width % 2 != 0)
    throw ConfigError("init_symmetric: width must be even and >= 2, got " + std::to_string(width));
  if (dim < 1) throw ConfigError("init_symmetric: dim must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  NetworkState net;
  net.width = width;
  net.dim = dim;
  net.w.resize(width, dim);
  net.a.resize(width);
  const int half = width / 2;
  for (int r = 0; r < half; ++r) {
    net.a(r) = normal(rng);
    for (int c = 0; c < dim; ++c) net.w(r, c) = normal(rng);
  }
  for (int r = 0; r < half; ++r) {
    net.a(half + r) = -net.a(r);
    net.w.row(half + r) = net.w.row(r);
  }
  return net;
}

double training_loss(const NetworkState& net, const Points& X, const Eigen::VectorXd& Y) {
  check_data(net, X, Y);
  return run_forward(net, X, Y).loss;
}

NetworkGradient loss_gradient(const NetworkState& net, const Points& X, const Eigen::VectorXd& Y) {
  check_data(net, X, Y);
  return gradient_from(net, X, Y, run_forward(net, X, Y));
}

TrainTrace train_gd(NetworkState state, const Points& X, const Eigen::VectorXd& Y, const TrainOptions& options) {
  check_data(state, X, Y);
  if (!(options.eta > 0.0)) throw ConfigError("train_gd: eta must be positive");
  TrainTrace trace;
  trace.eta_initial = options.eta;
  double eta = options.eta;

  Forward fw = run_forward(state, X, Y);
  const double initial = fw.loss;
  trace.loss_history.push_back(fw.loss);
  auto snapshot = [&](std::size_t step) {
    if (!options.eval_grid) return;
    trace.checkpoints.push_back({step, fw.loss, state.forward(*options.eval_grid)});
  };
  snapshot(0);

  std::size_t step = 0;
  int consecutive_halvings = 0;
  while (step < options.steps && !(fw.loss < options.tolerance)) {
    const NetworkGradient g = gradient_from(state, X, Y, fw);
    NetworkState next = state;
    next.w -= eta * g.w;
    next.a -= eta * g.a;
    Forward next_fw = run_forward(next, X, Y);

    const bool blew_up = !std::isfinite(next_fw.loss) || next_fw.loss > 1e6 * std::max(initial, 1e-300);
    const bool increased = next_fw.loss > fw.loss * (1.0 + 1e-12);
    if (options.adaptive && (blew_up || increased)) {
      eta *= 0.5;
      trace.halvings.push_back(step);
      if (++consecutive_halvings > kMaxConsecutiveHalvings) throw DivergenceError(step, next_fw.loss);
      continue;
    }
    if (blew_up) throw DivergenceError(step, next_fw.loss);
    consecutive_halvings = 0;
    state = std::move(next);
    fw = std::move(next_fw);
    ++step;
    trace.loss_history.push_back(fw.loss);
    if (is_checkpoint(step)) snapshot(step);
  }
  if (!trace.checkpoints.empty() && trace.checkpoints.back().step != step) snapshot(step);
  trace.steps_taken = step;
  trace.eta_final = eta;
  trace.converged = fw.loss < options.tolerance;
  trace.final_state = std::move(state);
  return trace;
}

FitResult ntk_interpolator(const Points& X, const Eigen::VectorXd& Y, unsigned workers) {
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (std::abs(X.row(i).norm() - 1.0) > 1e-9)
      throw DomainError("ntk_interpolator: training input " + std::to_string(i) + " is not on the unit sphere");
  return fit(KernelSpec::ntk2(), X, Y, 0.0, workers);
}

double sup_gap(const NetworkState& net, const FitResult& ntk_fit, const Points& eval_grid, unsigned workers) {
  const Eigen::VectorXd nn = net.forward(eval_grid);
  const Eigen::VectorXd kernel = predict(ntk_fit, eval_grid, workers);
  return (nn - kernel).cwiseAbs().maxCoeff();
}

EmpiricalNtk empirical_ntk(const NetworkState& net, PointRef x, PointRef y) {
  const double dot = x.dot(y);
  const int half = net.width / 2;
  // Per-neuron contribution z_r; the kernel is their mean over all m neurons.
  auto contribution = [&](int r) {
    const double px = net.w.row(r).dot(x), py = net.w.row(r).dot(y);
    const double relu = std::max(px, 0.0) * std::max(py, 0.0);
    const double gate = (px > 0.0 && py > 0.0) ? 1.0 : 0.0;
    return 2.0 * (relu + net.a(r) * net.a(r) * gate * dot);
  };
  double sum = 0.0;
  for (int r = 0; r < net.width; ++r) sum += contribution(r);
  EmpiricalNtk out;
  out.value = sum / net.width;
  if (half >= 2) {
    double m = 0.0, s = 0.0;
    for (int r = 0; r < half; ++r) m += contribution(r);
    m /= half;
    for (int r = 0; r < half; ++r) s += (contribution(r) - m) * (contribution(r) - m);
    out.standard_error = std::sqrt(s / (half - 1) / half);
  }
  return out;
}

}  // namespace kilab
