#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hmt/mdp.hpp"
#include "hmt/rng.hpp"

namespace hmt {

/// Shape of a dueling network: input -> hidden (ReLU)... -> {value(1), advantage(actions)}.
struct QNetLayout {
  int input = 0;
  std::vector<int> hidden{128, 128};
  int actions = kActionCount;

  std::size_t parameter_count() const;
  friend bool operator==(const QNetLayout&, const QNetLayout&) = default;
};

/// Dueling Q-network, q(s, .) = V(s) + A(s, .) - mean_a A(s, a).
///
/// All weights and biases live in one flat vector, layer by layer: for every
/// dense layer the column-major weight matrix [out x in] followed by the
/// bias [out]. Layers are the hidden layers in order, then the value head,
/// then the advantage head.
class DuelingQNet {
 public:
  DuelingQNet() = default;
  explicit DuelingQNet(QNetLayout layout);

  /// He-uniform weights, zero biases.
  static DuelingQNet random(QNetLayout layout, Rng& rng);

  const QNetLayout& layout() const noexcept { return layout_; }
  Eigen::VectorXd& params() noexcept { return params_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }

  /// Q values for one observation. Throws UsageError on a length mismatch.
  Eigen::VectorXd q_values(std::span<const double> obs) const;

  /// Q values for a batch; obs is [input x batch], result [actions x batch].
  Eigen::MatrixXd forward(const Eigen::MatrixXd& obs) const;

  /// Mean Huber loss of q(s_i, a_i) against targets and its gradient with
  /// respect to params().
  double loss_and_gradient(const Eigen::MatrixXd& obs, std::span<const int> actions,
                           std::span<const double> targets, Eigen::VectorXd& grad) const;

  double loss(const Eigen::MatrixXd& obs, std::span<const int> actions,
              std::span<const double> targets) const;

  /// Offsets of the advantage-head bias inside params().
  std::size_t advantage_bias_offset() const;

  /// FNV-1a over the raw parameter bytes.
  std::uint64_t hash() const;

 private:
  struct Dense {
    std::size_t offset;
    int in;
    int out;
  };
  Dense layer(std::size_t i) const { return dense_[i]; }
  Eigen::Map<const Eigen::MatrixXd> weights(const Dense& d) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Dense& d) const;

  QNetLayout layout_;
  std::vector<Dense> dense_;  // hidden..., value, advantage
  Eigen::VectorXd params_;
};

/// Huber loss with threshold 1.
double huber(double x);
double huber_grad(double x);

}  // namespace hmt
