#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>

namespace criticsmc {

/// Twin-tower Q network: a two-layer ReLU encoder for the state features, a
/// matching encoder for the action, and a two-layer head on the concatenated
/// encodings producing one scalar per column. Batches are stored column-wise.
struct MlpDims {
  int state = 0;
  int action = 0;
  int width = 64;
  bool operator==(const MlpDims&) const = default;
};

class MlpNet {
 public:
  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;

  MlpNet() = default;
  MlpNet(MlpDims dims, std::uint64_t init_seed);  // He-normal weights, zero biases

  /// Same shapes, all-zero parameters; gradient accumulator.
  static MlpNet zeros_like(const MlpNet& other);

  const MlpDims& dims() const { return dims_; }
  std::size_t param_count() const;
  void get_params(std::span<double> out) const;
  void set_params(std::span<const double> in);
  void set_zero();

  /// Activations kept for the backward pass; mask information is implicit in
  /// the stored post-ReLU values.
  struct Cache {
    Mat h1s, h2s, h1a, h2a, hh;
  };

  /// q gets one entry per batch column. cache may be null for inference.
  void forward(const Mat& states, const Mat& actions, Eigen::RowVectorXd& q,
               Cache* cache = nullptr) const;

  /// Accumulates parameter gradients into `grads` (shapes must match; zero it
  /// first for a fresh gradient) given dL/dq per column.
  void backward(const Mat& states, const Mat& actions, const Cache& cache,
                const Eigen::RowVectorXd& dq, MlpNet& grads) const;

  /// In-place convex blend toward `target` source: p <- (1-rho) p + rho src.
  void polyak_from(const MlpNet& src, double rho);

  // Parameter blocks in flat serialization order.
  Mat w_s1, w_s2, w_a1, w_a2, w_h1, w_h2;
  Vec b_s1, b_s2, b_a1, b_a2, b_h1, b_h2;

 private:
  template <class Fn>
  void for_each_block(Fn&& fn);
  template <class Fn>
  void for_each_block(Fn&& fn) const;

  MlpDims dims_;
};

/// Float32 snapshot of an MlpNet for fast rollout-time evaluation. The state
/// tower runs once per state; its contribution to the head's first layer is
/// cached so each putative action costs only the action tower plus the head.
class MlpNetF {
 public:
  using Mat = Eigen::MatrixXf;
  using Vec = Eigen::VectorXf;

  MlpNetF() = default;
  explicit MlpNetF(const MlpNet& net);

  const MlpDims& dims() const { return dims_; }

  /// Precomputed per-state context: head-layer contribution of the encoded state.
  struct StateContext {
    Vec head_bias;  // b_h1 + W_h1[:, :width] * encode(state)
  };

  StateContext encode_state(Eigen::Ref<const Vec> features) const;

  /// Scores a batch of actions (columns) against one encoded state.
  void score_actions(const StateContext& ctx, const Mat& actions,
                     Eigen::Ref<Eigen::RowVectorXf> q_out) const;

 private:
  MlpDims dims_;
  Mat w_s1, w_s2, w_a1, w_a2, w_h1s, w_h1a;
  Vec b_s1, b_s2, b_a1, b_a2, b_h1;
  Eigen::RowVectorXf w_h2;
  float b_h2 = 0.0f;
  // Scratch for score_actions; sized on first use.
  mutable Mat t1_, t2_, th_;
};

}  // namespace criticsmc
