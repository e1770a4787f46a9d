#include "criticsmc/critic/mlp_net.hpp"

#include <cmath>
#include <stdexcept>

#include "criticsmc/errors.hpp"
#include "criticsmc/rng.hpp"

namespace criticsmc {

namespace {

void he_init(Eigen::MatrixXd& w, Xoshiro256& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(w.cols()));
  // Column-major traversal keeps draws aligned with the flat layout.
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      w(r, c) = stddev * rng.normal();
    }
  }
}

}  // namespace

template <class Fn>
void MlpNet::for_each_block(Fn&& fn) {
  fn(w_s1);
  fn(b_s1);
  fn(w_s2);
  fn(b_s2);
  fn(w_a1);
  fn(b_a1);
  fn(w_a2);
  fn(b_a2);
  fn(w_h1);
  fn(b_h1);
  fn(w_h2);
  fn(b_h2);
}

template <class Fn>
void MlpNet::for_each_block(Fn&& fn) const {
  fn(w_s1);
  fn(b_s1);
  fn(w_s2);
  fn(b_s2);
  fn(w_a1);
  fn(b_a1);
  fn(w_a2);
  fn(b_a2);
  fn(w_h1);
  fn(b_h1);
  fn(w_h2);
  fn(b_h2);
}

MlpNet::MlpNet(MlpDims dims, std::uint64_t init_seed) : dims_(dims) {
  if (dims.state < 1 || dims.action < 1 || dims.width < 1) {
    throw ConfigError("MlpNet: dimensions must be positive");
  }
  const int w = dims.width;
  w_s1.resize(w, dims.state);
  w_s2.resize(w, w);
  w_a1.resize(w, dims.action);
  w_a2.resize(w, w);
  w_h1.resize(w, 2 * w);
  w_h2.resize(1, w);
  b_s1 = Vec::Zero(w);
  b_s2 = Vec::Zero(w);
  b_a1 = Vec::Zero(w);
  b_a2 = Vec::Zero(w);
  b_h1 = Vec::Zero(w);
  b_h2 = Vec::Zero(1);
  Xoshiro256 rng(init_seed);
  he_init(w_s1, rng);
  he_init(w_s2, rng);
  he_init(w_a1, rng);
  he_init(w_a2, rng);
  he_init(w_h1, rng);
  he_init(w_h2, rng);
}

MlpNet MlpNet::zeros_like(const MlpNet& other) {
  MlpNet z = other;
  z.set_zero();
  return z;
}

void MlpNet::set_zero() {
  for_each_block([](auto& block) { block.setZero(); });
}

std::size_t MlpNet::param_count() const {
  std::size_t n = 0;
  for_each_block([&](const auto& block) { n += static_cast<std::size_t>(block.size()); });
  return n;
}

void MlpNet::get_params(std::span<double> out) const {
  if (out.size() != param_count()) {
    throw std::invalid_argument("MlpNet::get_params: size mismatch");
  }
  std::size_t at = 0;
  for_each_block([&](const auto& block) {
    const auto n = static_cast<std::size_t>(block.size());
    std::copy_n(block.data(), n, out.data() + at);
    at += n;
  });
}

void MlpNet::set_params(std::span<const double> in) {
  if (in.size() != param_count()) {
    throw std::invalid_argument("MlpNet::set_params: size mismatch");
  }
  std::size_t at = 0;
  for_each_block([&](auto& block) {
    const auto n = static_cast<std::size_t>(block.size());
    std::copy_n(in.data() + at, n, block.data());
    at += n;
  });
}

void MlpNet::forward(const Mat& states, const Mat& actions, Eigen::RowVectorXd& q,
                     Cache* cache) const {
  const Eigen::Index batch = states.cols();
  if (actions.cols() != batch) {
    throw std::invalid_argument("MlpNet::forward: batch size mismatch");
  }
  if (states.rows() != dims_.state || actions.rows() != dims_.action) {
    throw std::invalid_argument("MlpNet::forward: feature dimension mismatch");
  }
  const int w = dims_.width;
  Mat h1s = ((w_s1 * states).colwise() + b_s1).cwiseMax(0.0);
  Mat h2s = ((w_s2 * h1s).colwise() + b_s2).cwiseMax(0.0);
  Mat h1a = ((w_a1 * actions).colwise() + b_a1).cwiseMax(0.0);
  Mat h2a = ((w_a2 * h1a).colwise() + b_a2).cwiseMax(0.0);
  Mat hh = ((w_h1.leftCols(w) * h2s + w_h1.rightCols(w) * h2a).colwise() + b_h1).cwiseMax(0.0);
  q = (w_h2 * hh).row(0);
  q.array() += b_h2(0);
  if (cache != nullptr) {
    cache->h1s = std::move(h1s);
    cache->h2s = std::move(h2s);
    cache->h1a = std::move(h1a);
    cache->h2a = std::move(h2a);
    cache->hh = std::move(hh);
  }
}

void MlpNet::backward(const Mat& states, const Mat& actions, const Cache& cache,
                      const Eigen::RowVectorXd& dq, MlpNet& grads) const {
  const int w = dims_.width;
  // ReLU derivative: post-activation value > 0 iff the unit was active. Ties
  // at exactly zero get derivative zero, matching the subgradient choice of
  // cwiseMax.
  grads.w_h2.noalias() += dq * cache.hh.transpose();
  grads.b_h2(0) += dq.sum();
  Mat dhh = (w_h2.transpose() * dq).cwiseProduct((cache.hh.array() > 0.0).cast<double>().matrix());
  grads.w_h1.leftCols(w).noalias() += dhh * cache.h2s.transpose();
  grads.w_h1.rightCols(w).noalias() += dhh * cache.h2a.transpose();
  grads.b_h1.noalias() += dhh.rowwise().sum();

  Mat dh2s = (w_h1.leftCols(w).transpose() * dhh)
                 .cwiseProduct((cache.h2s.array() > 0.0).cast<double>().matrix());
  grads.w_s2.noalias() += dh2s * cache.h1s.transpose();
  grads.b_s2.noalias() += dh2s.rowwise().sum();
  Mat dh1s = (w_s2.transpose() * dh2s)
                 .cwiseProduct((cache.h1s.array() > 0.0).cast<double>().matrix());
  grads.w_s1.noalias() += dh1s * states.transpose();
  grads.b_s1.noalias() += dh1s.rowwise().sum();

  Mat dh2a = (w_h1.rightCols(w).transpose() * dhh)
                 .cwiseProduct((cache.h2a.array() > 0.0).cast<double>().matrix());
  grads.w_a2.noalias() += dh2a * cache.h1a.transpose();
  grads.b_a2.noalias() += dh2a.rowwise().sum();
  Mat dh1a = (w_a2.transpose() * dh2a)
                 .cwiseProduct((cache.h1a.array() > 0.0).cast<double>().matrix());
  grads.w_a1.noalias() += dh1a * actions.transpose();
  grads.b_a1.noalias() += dh1a.rowwise().sum();
}

void MlpNet::polyak_from(const MlpNet& src, double rho) {
  if (src.dims_ != dims_) {
    throw std::invalid_argument("MlpNet::polyak_from: dimension mismatch");
  }
  const auto blend = [rho](auto& dst, const auto& s) { dst = (1.0 - rho) * dst + rho * s; };
  blend(w_s1, src.w_s1);
  blend(b_s1, src.b_s1);
  blend(w_s2, src.w_s2);
  blend(b_s2, src.b_s2);
  blend(w_a1, src.w_a1);
  blend(b_a1, src.b_a1);
  blend(w_a2, src.w_a2);
  blend(b_a2, src.b_a2);
  blend(w_h1, src.w_h1);
  blend(b_h1, src.b_h1);
  blend(w_h2, src.w_h2);
  blend(b_h2, src.b_h2);
}

MlpNetF::MlpNetF(const MlpNet& net) : dims_(net.dims()) {
  const int w = dims_.width;
  w_s1 = net.w_s1.cast<float>();
  w_s2 = net.w_s2.cast<float>();
  w_a1 = net.w_a1.cast<float>();
  w_a2 = net.w_a2.cast<float>();
  w_h1s = net.w_h1.leftCols(w).cast<float>();
  w_h1a = net.w_h1.rightCols(w).cast<float>();
  b_s1 = net.b_s1.cast<float>();
  b_s2 = net.b_s2.cast<float>();
  b_a1 = net.b_a1.cast<float>();
  b_a2 = net.b_a2.cast<float>();
  b_h1 = net.b_h1.cast<float>();
  w_h2 = net.w_h2.row(0).cast<float>();
  b_h2 = static_cast<float>(net.b_h2(0));
}

MlpNetF::StateContext MlpNetF::encode_state(Eigen::Ref<const Vec> features) const {
  if (features.size() != dims_.state) {
    throw std::invalid_argument("MlpNetF::encode_state: feature dimension mismatch");
  }
  Vec h1 = ((w_s1 * features) + b_s1).cwiseMax(0.0f);
  Vec h2 = ((w_s2 * h1) + b_s2).cwiseMax(0.0f);
  StateContext ctx;
  ctx.head_bias = (w_h1s * h2) + b_h1;
  return ctx;
}

void MlpNetF::score_actions(const StateContext& ctx, const Mat& actions,
                            Eigen::Ref<Eigen::RowVectorXf> q_out) const {
  if (actions.rows() != dims_.action) {
    throw std::invalid_argument("MlpNetF::score_actions: action dimension mismatch");
  }
  if (q_out.size() != actions.cols()) {
    throw std::invalid_argument("MlpNetF::score_actions: output size mismatch");
  }
  t1_.noalias() = w_a1 * actions;
  t1_ = (t1_.colwise() + b_a1).cwiseMax(0.0f);
  t2_.noalias() = w_a2 * t1_;
  t2_ = (t2_.colwise() + b_a2).cwiseMax(0.0f);
  th_.noalias() = w_h1a * t2_;
  th_ = (th_.colwise() + ctx.head_bias).cwiseMax(0.0f);
  q_out.noalias() = w_h2 * th_;
  q_out.array() += b_h2;
}

}  // namespace criticsmc
