#pragma once

#include <stdexcept>
#include <string>

namespace criticsmc {

/// All particle weights are zero: total constraint violation, no ancestor can be drawn.
class DegenerateParticleSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Critic checkpoint missing, malformed, or shape-incompatible.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training aborted on non-finite loss; message carries the diagnostic dump location.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace criticsmc
