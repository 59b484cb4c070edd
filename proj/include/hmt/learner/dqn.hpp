#pragma once

#include <span>
#include <vector>

#include "hmt/learner/qnet.hpp"
#include "hmt/learner/replay.hpp"

namespace hmt {

/// Argmax with ties to the lowest index.
int greedy_action(const Eigen::VectorXd& q);

/// Epsilon-greedy. One uniform draw decides exploration, a second picks the
/// random action.
int select_action(const DuelingQNet& net, std::span<const double> obs, double eps, Rng& rng);

/// Double-DQN targets from precomputed next-state Q tables [actions x batch]:
/// y = r + gamma * Q_target(s', argmax_a Q_online(s', a)), or y = r when terminal.
std::vector<double> td_targets(std::span<const double> rewards, const std::vector<bool>& terminal,
                               const Eigen::MatrixXd& q_online_next,
                               const Eigen::MatrixXd& q_target_next, double gamma);

std::vector<double> td_targets(std::span<const Transition* const> batch, const DuelingQNet& online,
                               const DuelingQNet& target, double gamma);

/// SGD with momentum: v <- mu v + g; theta <- theta - lr v. Gradients whose
/// norm exceeds clip_norm (when > 0) are rescaled first.
class SgdMomentum {
 public:
  SgdMomentum(double lr = 1e-4, double momentum = 0.9, double clip_norm = 10.0)
      : lr_(lr), momentum_(momentum), clip_norm_(clip_norm) {}

  void apply(Eigen::VectorXd& params, Eigen::VectorXd grad);
  double lr() const noexcept { return lr_; }

 private:
  double lr_;
  double momentum_;
  double clip_norm_;
  Eigen::VectorXd velocity_;
};

Eigen::MatrixXd stack_observations(std::span<const Transition* const> batch, bool next);

/// One gradient step on the mean Huber loss between q(s, a) and the
/// double-DQN targets. Returns the pre-step loss; throws TrainingError when
/// it is not finite.
double update_step(DuelingQNet& online, const DuelingQNet& target,
                   std::span<const Transition* const> batch, double gamma, SgdMomentum& optimizer);

}  // namespace hmt
