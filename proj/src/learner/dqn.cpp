#include "hmt/learner/dqn.hpp"

#include <cmath>
#include <string>

#include "hmt/errors.hpp"

namespace hmt {

int greedy_action(const Eigen::VectorXd& q) {
  int best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i)
    if (q(i) > q(best)) best = static_cast<int>(i);
  return best;
}

int select_action(const DuelingQNet& net, std::span<const double> obs, double eps, Rng& rng) {
  if (rng.uniform() < eps) return static_cast<int>(rng.below(static_cast<std::uint64_t>(net.layout().actions)));
  return greedy_action(net.q_values(obs));
}

std::vector<double> td_targets(std::span<const double> rewards, const std::vector<bool>& terminal,
                               const Eigen::MatrixXd& q_online_next,
                               const Eigen::MatrixXd& q_target_next, double gamma) {
  if (rewards.empty()) throw UsageError("td_targets: empty batch");
  std::vector<double> y(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    y[i] = rewards[i];
    if (terminal[i]) continue;
    const auto col = static_cast<Eigen::Index>(i);
    const int a = greedy_action(q_online_next.col(col));
    y[i] += gamma * q_target_next(a, col);
  }
  return y;
}

Eigen::MatrixXd stack_observations(std::span<const Transition* const> batch, bool next) {
  const auto rows = static_cast<Eigen::Index>((next ? batch[0]->next_obs : batch[0]->obs).size());
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& v = next ? batch[i]->next_obs : batch[i]->obs;
    if (static_cast<Eigen::Index>(v.size()) != rows) throw UsageError("batch: ragged observations");
    m.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(v.data(), rows);
  }
  return m;
}

std::vector<double> td_targets(std::span<const Transition* const> batch, const DuelingQNet& online,
                               const DuelingQNet& target, double gamma) {
  if (batch.empty()) throw UsageError("td_targets: empty batch");
  const Eigen::MatrixXd next = stack_observations(batch, true);
  std::vector<double> rewards(batch.size());
  std::vector<bool> term(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    rewards[i] = batch[i]->reward;
    term[i] = batch[i]->terminal;
  }
  return td_targets(rewards, term, online.forward(next), target.forward(next), gamma);
}

void SgdMomentum::apply(Eigen::VectorXd& params, Eigen::VectorXd grad) {
  if (velocity_.size() != params.size()) velocity_ = Eigen::VectorXd::Zero(params.size());
  if (clip_norm_ > 0.0) {
    const double n = grad.norm();
    if (n > clip_norm_) grad *= clip_norm_ / n;
  }
  velocity_ = momentum_ * velocity_ + grad;
  params -= lr_ * velocity_;
}

double update_step(DuelingQNet& online, const DuelingQNet& target,
                   std::span<const Transition* const> batch, double gamma, SgdMomentum& optimizer) {
  const std::vector<double> y = td_targets(batch, online, target, gamma);
  const Eigen::MatrixXd obs = stack_observations(batch, false);
  std::vector<int> actions(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) actions[i] = batch[i]->action;
  Eigen::VectorXd grad;
  const double loss = online.loss_and_gradient(obs, actions, y, grad);
  if (!std::isfinite(loss) || !grad.allFinite())
    throw TrainingError("update_step: non-finite loss (" + std::to_string(loss) + ")");
  optimizer.apply(online.params(), std::move(grad));
  return loss;
}

}  // namespace hmt
