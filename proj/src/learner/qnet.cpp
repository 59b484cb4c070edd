#include "hmt/learner/qnet.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "hmt/errors.hpp"

namespace hmt {

std::size_t QNetLayout::parameter_count() const {
  std::size_t n = 0;
  int prev = input;
  for (int h : hidden) {
    n += static_cast<std::size_t>(h) * prev + h;
    prev = h;
  }
  n += static_cast<std::size_t>(prev) + 1;
  n += static_cast<std::size_t>(actions) * prev + actions;
  return n;
}

DuelingQNet::DuelingQNet(QNetLayout layout) : layout_(std::move(layout)) {
  if (layout_.input <= 0 || layout_.actions <= 0)
    throw UsageError("DuelingQNet: input and action counts must be positive");
  std::size_t offset = 0;
  int prev = layout_.input;
  auto add = [&](int out) {
    dense_.push_back({offset, prev, out});
    offset += static_cast<std::size_t>(out) * prev + out;
  };
  for (int h : layout_.hidden) {
    if (h <= 0) throw UsageError("DuelingQNet: hidden widths must be positive");
    add(h);
    prev = h;
  }
  const int trunk = prev;
  add(1);
  prev = trunk;
  add(layout_.actions);
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

DuelingQNet DuelingQNet::random(QNetLayout layout, Rng& rng) {
  DuelingQNet net(std::move(layout));
  for (const auto& d : net.dense_) {
    const double bound = std::sqrt(6.0 / d.in);
    const std::size_t nw = static_cast<std::size_t>(d.in) * d.out;
    for (std::size_t i = 0; i < nw; ++i)
      net.params_[static_cast<Eigen::Index>(d.offset + i)] = rng.uniform(-bound, bound);
  }
  return net;
}

Eigen::Map<const Eigen::MatrixXd> DuelingQNet::weights(const Dense& d) const {
  return {params_.data() + d.offset, d.out, d.in};
}

Eigen::Map<const Eigen::VectorXd> DuelingQNet::bias(const Dense& d) const {
  return {params_.data() + d.offset + static_cast<std::size_t>(d.in) * d.out, d.out};
}

std::size_t DuelingQNet::advantage_bias_offset() const {
  const Dense& d = dense_.back();
  return d.offset + static_cast<std::size_t>(d.in) * d.out;
}

Eigen::MatrixXd DuelingQNet::forward(const Eigen::MatrixXd& obs) const {
  if (obs.rows() != layout_.input)
    throw UsageError("q_values: observation length " + std::to_string(obs.rows()) +
                     " does not match network input " + std::to_string(layout_.input));
  Eigen::MatrixXd a = obs;
  const std::size_t nh = layout_.hidden.size();
  for (std::size_t i = 0; i < nh; ++i) {
    const Dense& d = dense_[i];
    Eigen::MatrixXd z = weights(d) * a;
    z.colwise() += bias(d);
    a = z.cwiseMax(0.0);
  }
  const Dense& dv = dense_[nh];
  const Dense& da = dense_[nh + 1];
  Eigen::RowVectorXd v = weights(dv) * a;
  v.array() += bias(dv)(0);
  Eigen::MatrixXd adv = weights(da) * a;
  adv.colwise() += bias(da);
  const Eigen::RowVectorXd mean = adv.colwise().mean();
  adv.rowwise() += v - mean;
  return adv;
}

Eigen::VectorXd DuelingQNet::q_values(std::span<const double> obs) const {
  const Eigen::Map<const Eigen::MatrixXd> x(obs.data(), static_cast<Eigen::Index>(obs.size()), 1);
  return forward(x).col(0);
}

double huber(double x) {
  const double a = std::abs(x);
  return a <= 1.0 ? 0.5 * x * x : a - 0.5;
}

double huber_grad(double x) { return std::clamp(x, -1.0, 1.0); }

double DuelingQNet::loss(const Eigen::MatrixXd& obs, std::span<const int> actions,
                         std::span<const double> targets) const {
  const Eigen::MatrixXd q = forward(obs);
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.cols(); ++i)
    total += huber(q(actions[static_cast<std::size_t>(i)], i) - targets[static_cast<std::size_t>(i)]);
  return total / static_cast<double>(q.cols());
}

double DuelingQNet::loss_and_gradient(const Eigen::MatrixXd& obs, std::span<const int> actions,
                                      std::span<const double> targets,
                                      Eigen::VectorXd& grad) const {
  if (obs.rows() != layout_.input) throw UsageError("loss_and_gradient: observation length mismatch");
  const Eigen::Index batch = obs.cols();
  if (static_cast<std::size_t>(batch) != actions.size() ||
      static_cast<std::size_t>(batch) != targets.size() || batch == 0)
    throw UsageError("loss_and_gradient: batch size mismatch");

  const std::size_t nh = layout_.hidden.size();
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[i+1] = relu output of hidden i
  std::vector<Eigen::MatrixXd> pre;
  acts.reserve(nh + 1);
  pre.reserve(nh);
  acts.push_back(obs);
  for (std::size_t i = 0; i < nh; ++i) {
    const Dense& d = dense_[i];
    Eigen::MatrixXd z = weights(d) * acts.back();
    z.colwise() += bias(d);
    acts.push_back(z.cwiseMax(0.0));
    pre.push_back(std::move(z));
  }
  const Eigen::MatrixXd& h = acts.back();
  const Dense& dv = dense_[nh];
  const Dense& da = dense_[nh + 1];
  Eigen::RowVectorXd v = weights(dv) * h;
  v.array() += bias(dv)(0);
  Eigen::MatrixXd adv = weights(da) * h;
  adv.colwise() += bias(da);
  const Eigen::RowVectorXd mean = adv.colwise().mean();

  const double inv_b = 1.0 / static_cast<double>(batch);
  const double inv_a = 1.0 / static_cast<double>(layout_.actions);
  double total = 0.0;
  Eigen::RowVectorXd d_v(batch);
  Eigen::MatrixXd d_adv(layout_.actions, batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= layout_.actions) throw UsageError("loss_and_gradient: action out of range");
    const double q = v(i) + adv(a, i) - mean(i);
    const double delta = q - targets[static_cast<std::size_t>(i)];
    total += huber(delta);
    const double g = huber_grad(delta) * inv_b;
    d_v(i) = g;
    d_adv.col(i).setConstant(-g * inv_a);
    d_adv(a, i) += g;
  }

  grad.setZero(params_.size());
  auto grad_w = [&](const Dense& d) {
    return Eigen::Map<Eigen::MatrixXd>(grad.data() + d.offset, d.out, d.in);
  };
  auto grad_b = [&](const Dense& d) {
    return Eigen::Map<Eigen::VectorXd>(grad.data() + d.offset + static_cast<std::size_t>(d.in) * d.out,
                                       d.out);
  };
  grad_w(dv).noalias() = d_v * h.transpose();
  grad_b(dv)(0) = d_v.sum();
  grad_w(da).noalias() = d_adv * h.transpose();
  grad_b(da) = d_adv.rowwise().sum();

  Eigen::MatrixXd d_h = weights(dv).transpose() * d_v;
  d_h.noalias() += weights(da).transpose() * d_adv;
  for (std::size_t k = nh; k-- > 0;) {
    const Dense& d = dense_[k];
    Eigen::MatrixXd dz = (pre[k].array() > 0.0).select(d_h, 0.0);
    grad_w(d).noalias() = dz * acts[k].transpose();
    grad_b(d) = dz.rowwise().sum();
    if (k > 0) d_h.noalias() = weights(d).transpose() * dz;
  }
  return total * inv_b;
}

std::uint64_t DuelingQNet::hash() const {
  std::uint64_t h = fnv1a({});
  const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
  const std::size_t n = static_cast<std::size_t>(params_.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace hmt
