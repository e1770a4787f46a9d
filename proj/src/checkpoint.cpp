#include "criticsmc/critic/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "criticsmc/errors.hpp"

namespace criticsmc {

namespace {
constexpr const char* kFormatTag = "criticsmc/mlp-critic";
}

CriticCheckpoint CriticCheckpoint::from_net(const MlpNet& net) {
  CriticCheckpoint ckpt;
  ckpt.dims = net.dims();
  ckpt.params.resize(net.param_count());
  net.get_params(ckpt.params);
  return ckpt;
}

MlpNet CriticCheckpoint::to_net() const {
  MlpNet net(dims, /*init_seed=*/0);
  if (params.size() != net.param_count()) {
    throw CheckpointError("checkpoint parameter count " + std::to_string(params.size()) +
                          " does not match dims (expected " +
                          std::to_string(net.param_count()) + ")");
  }
  net.set_params(params);
  return net;
}

void save_checkpoint(const CriticCheckpoint& ckpt, const std::string& path) {
  nlohmann::json j;
  j["format"] = kFormatTag;
  j["version"] = CriticCheckpoint::kVersion;
  j["dims"] = {{"state", ckpt.dims.state}, {"action", ckpt.dims.action}, {"width", ckpt.dims.width}};
  j["action_scale"] = ckpt.action_scale;
  j["reward_scale"] = ckpt.reward_scale;
  j["gamma"] = ckpt.gamma;
  j["feature_layout"] = ckpt.feature_layout;
  j["trained_env_steps"] = ckpt.trained_env_steps;
  j["train_seed"] = ckpt.train_seed;
  j["eval_infraction_rate"] = ckpt.eval_infraction_rate;
  j["eval_td_loss"] = ckpt.eval_td_loss;
  j["params"] = ckpt.params;
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  // nlohmann serializes doubles with shortest-round-trip precision, so the
  // parameter vector survives save/load bit-identically.
  out << j.dump(1) << '\n';
  if (!out) throw CheckpointError("write failed: " + path);
}

CriticCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormatTag) {
      throw CheckpointError("not a critic checkpoint: " + path);
    }
    if (j.at("version").get<int>() != CriticCheckpoint::kVersion) {
      throw CheckpointError("unsupported checkpoint version in " + path);
    }
    CriticCheckpoint ckpt;
    const auto& d = j.at("dims");
    ckpt.dims.state = d.at("state").get<int>();
    ckpt.dims.action = d.at("action").get<int>();
    ckpt.dims.width = d.at("width").get<int>();
    ckpt.action_scale = j.at("action_scale").get<double>();
    ckpt.reward_scale = j.at("reward_scale").get<double>();
    ckpt.gamma = j.at("gamma").get<double>();
    ckpt.feature_layout = j.at("feature_layout").get<std::string>();
    ckpt.trained_env_steps = j.at("trained_env_steps").get<std::uint64_t>();
    ckpt.train_seed = j.at("train_seed").get<std::uint64_t>();
    ckpt.eval_infraction_rate = j.at("eval_infraction_rate").get<double>();
    ckpt.eval_td_loss = j.at("eval_td_loss").get<double>();
    ckpt.params = j.at("params").get<std::vector<double>>();
    const std::size_t expected = MlpNet(ckpt.dims, 0).param_count();
    if (ckpt.params.size() != expected) {
      throw CheckpointError("checkpoint " + path + " has " + std::to_string(ckpt.params.size()) +
                            " parameters, dims require " + std::to_string(expected));
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("invalid checkpoint " + path + ": " + e.what());
  }
}

}  // namespace criticsmc
