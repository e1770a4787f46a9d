#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "criticsmc/rng.hpp"

namespace criticsmc {

struct ReplayConfig {
  std::size_t capacity = 1'000'000;
  double priority_exponent = 0.6;   // p_i = (|td_i| + priority_floor)^exponent
  double priority_floor = 1e-4;
};

/// Prioritized experience replay over a FIFO ring buffer. Priorities live in a
/// sum tree; sampling is stratified over equal probability-mass slices so a
/// batch covers the distribution evenly. New items enter at the largest
/// priority seen so far, guaranteeing every transition is trained on at least
/// once before its priority can decay.
template <class Item>
class PrioritizedReplay {
 public:
  explicit PrioritizedReplay(ReplayConfig cfg = {}) : cfg_(cfg) {
    if (cfg.capacity == 0) {
      throw std::invalid_argument("PrioritizedReplay: capacity must be positive");
    }
    leaf_base_ = 1;
    while (leaf_base_ < cfg.capacity) leaf_base_ <<= 1;
    tree_.assign(2 * leaf_base_, 0.0);
    items_.reserve(std::min<std::size_t>(cfg.capacity, 1 << 20));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return cfg_.capacity; }
  double total_priority() const { return tree_[1]; }
  const Item& operator[](std::size_t i) const { return items_[i]; }

  void push(Item item) {
    if (items_.size() < cfg_.capacity) {
      items_.push_back(std::move(item));
      set_leaf(items_.size() - 1, max_priority_);
    } else {
      items_[write_] = std::move(item);
      set_leaf(write_, max_priority_);
      write_ = (write_ + 1) % cfg_.capacity;
    }
  }

  struct Batch {
    std::vector<std::size_t> indices;
    std::vector<double> is_weights;  // normalized so the batch maximum is 1
  };

  /// beta is the importance-sampling exponent (1 = fully corrected).
  Batch sample(std::size_t batch_size, double beta, Xoshiro256& rng) const {
    if (items_.empty()) {
      throw std::logic_error("PrioritizedReplay::sample: buffer is empty");
    }
    if (batch_size == 0) {
      throw std::invalid_argument("PrioritizedReplay::sample: batch_size must be positive");
    }
    const double total = tree_[1];
    Batch out;
    out.indices.resize(batch_size);
    out.is_weights.resize(batch_size);
    const double slice = total / static_cast<double>(batch_size);
    double max_w = 0.0;
    for (std::size_t k = 0; k < batch_size; ++k) {
      const double u = (static_cast<double>(k) + rng.uniform()) * slice;
      const std::size_t idx = descend(u);
      out.indices[k] = idx;
      const double prob = tree_[leaf_base_ + idx] / total;
      const double w = std::pow(static_cast<double>(items_.size()) * prob, -beta);
      out.is_weights[k] = w;
      max_w = std::max(max_w, w);
    }
    for (double& w : out.is_weights) w /= max_w;
    return out;
  }

  void update_priorities(std::span<const std::size_t> indices,
                         std::span<const double> td_errors) {
    if (indices.size() != td_errors.size()) {
      throw std::invalid_argument("PrioritizedReplay::update_priorities: size mismatch");
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= items_.size()) {
        throw std::out_of_range("PrioritizedReplay::update_priorities: bad index");
      }
      const double p =
          std::pow(std::abs(td_errors[k]) + cfg_.priority_floor, cfg_.priority_exponent);
      max_priority_ = std::max(max_priority_, p);
      set_leaf(indices[k], p);
    }
  }

 private:
  void set_leaf(std::size_t idx, double priority) {
    std::size_t node = leaf_base_ + idx;
    tree_[node] = priority;
    // Recompute ancestors from children to keep sums drift-free.
    for (node >>= 1; node >= 1; node >>= 1) {
      tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
      if (node == 1) break;
    }
  }

  std::size_t descend(double u) const {
    std::size_t node = 1;
    while (node < leaf_base_) {
      const double left = tree_[2 * node];
      if (u < left) {
        node = 2 * node;
      } else {
        u -= left;
        node = 2 * node + 1;
      }
    }
    return std::min(node - leaf_base_, items_.size() - 1);
  }

  ReplayConfig cfg_;
  std::vector<double> tree_;
  std::vector<Item> items_;
  std::size_t leaf_base_ = 1;
  std::size_t write_ = 0;
  double max_priority_ = 1.0;
};

}  // namespace criticsmc
