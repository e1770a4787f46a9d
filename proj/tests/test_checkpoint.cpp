#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "criticsmc/critic/checkpoint.hpp"
#include "criticsmc/critic/pursuit_critic.hpp"
#include "criticsmc/environments/pursuit_world.hpp"
#include "criticsmc/errors.hpp"
#include "doctest.h"

using namespace criticsmc;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

struct FileGuard {
  std::string path;
  ~FileGuard() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("checkpoint: save/load round-trips parameters bit-identically") {
  MlpNet net(MlpDims{6, 2, 16}, 77);
  CriticCheckpoint ckpt = CriticCheckpoint::from_net(net);
  ckpt.action_scale = 0.025;
  ckpt.reward_scale = 10000.0;
  ckpt.gamma = 0.99;
  ckpt.feature_layout = "test-layout";
  ckpt.trained_env_steps = 12345;
  ckpt.train_seed = 42;
  ckpt.eval_infraction_rate = 0.125;
  ckpt.eval_td_loss = 0.0625;

  const std::string path = temp_path("criticsmc_test_ckpt_roundtrip.json");
  FileGuard guard{path};
  save_checkpoint(ckpt, path);
  const CriticCheckpoint back = load_checkpoint(path);

  CHECK(back.dims == ckpt.dims);
  CHECK(back.params == ckpt.params);  // shortest-round-trip JSON doubles
  CHECK(back.action_scale == 0.025);
  CHECK(back.reward_scale == 10000.0);
  CHECK(back.gamma == 0.99);
  CHECK(back.feature_layout == "test-layout");
  CHECK(back.trained_env_steps == 12345);
  CHECK(back.train_seed == 42);
  CHECK(back.eval_infraction_rate == 0.125);
  CHECK(back.eval_td_loss == 0.0625);

  // Evaluation through the restored network is bit-identical.
  const MlpNet restored = back.to_net();
  Eigen::MatrixXd s = Eigen::MatrixXd::Random(6, 5);
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(2, 5);
  Eigen::RowVectorXd q1, q2;
  net.forward(s, a, q1);
  restored.forward(s, a, q2);
  CHECK(q1 == q2);
}

TEST_CASE("checkpoint: rejects mismatched parameter counts") {
  MlpNet net(MlpDims{4, 2, 8}, 1);
  CriticCheckpoint ckpt = CriticCheckpoint::from_net(net);
  ckpt.params.pop_back();
  CHECK_THROWS_AS(ckpt.to_net(), CheckpointError);

  const std::string path = temp_path("criticsmc_test_ckpt_badcount.json");
  FileGuard guard{path};
  CriticCheckpoint good = CriticCheckpoint::from_net(net);
  save_checkpoint(good, path);
  // Corrupt the dims so the stored parameter vector no longer matches.
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("\"width\": 8");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 10, "\"width\": 9");
  std::ofstream out(path);
  out << text;
  out.close();
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
}

TEST_CASE("checkpoint: rejects missing files, bad JSON, and foreign formats") {
  CHECK_THROWS_AS(load_checkpoint(temp_path("criticsmc_test_ckpt_missing.json")),
                  CheckpointError);

  const std::string garbled = temp_path("criticsmc_test_ckpt_garbled.json");
  FileGuard g1{garbled};
  {
    std::ofstream out(garbled);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_checkpoint(garbled), CheckpointError);

  const std::string foreign = temp_path("criticsmc_test_ckpt_foreign.json");
  FileGuard g2{foreign};
  {
    std::ofstream out(foreign);
    out << R"({"format": "something-else", "version": 1})";
  }
  CHECK_THROWS_AS(load_checkpoint(foreign), CheckpointError);
}

TEST_CASE("checkpoint: pursuit critic construction validates the feature dimension") {
  const PursuitConfig cfg;
  const PursuitWorld world(cfg, 5);
  MlpNet wrong(MlpDims{world.feature_dim() + 2, 2, 16}, 3);
  CriticCheckpoint ckpt = CriticCheckpoint::from_net(wrong);
  ckpt.action_scale = cfg.max_step;
  ckpt.reward_scale = cfg.penalty;
  CHECK_THROWS_AS(PursuitMlpCritic(world, ckpt), CheckpointError);

  MlpNet right(MlpDims{world.feature_dim(), 2, 16}, 3);
  CriticCheckpoint ok = CriticCheckpoint::from_net(right);
  ok.action_scale = cfg.max_step;
  ok.reward_scale = cfg.penalty;
  CHECK_NOTHROW(PursuitMlpCritic(world, ok));
}
