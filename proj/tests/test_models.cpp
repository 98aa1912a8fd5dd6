#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "tasar/models.hpp"

using namespace tasar;

namespace {

std::vector<std::array<int, 2>> chain_edges(int joints) {
  std::vector<std::array<int, 2>> e;
  for (int j = 0; j + 1 < joints; ++j) e.push_back({j, j + 1});
  return e;
}

MotionSequence random_motion(int frames, int joints, std::uint64_t seed) {
  MotionSequence m = MotionSequence::zeros(frames, joints);
  Stream s(seed);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < 3 * joints; ++c) m.frames(t, c) = s.uniform(-0.4, 0.4);
  return m;
}

Classifier make(Arch a, int classes = 6, int joints = 4, std::uint64_t seed = 5) {
  Classifier c(a, classes, joints, chain_edges(joints));
  c.init_params(seed);
  return c;
}

}  // namespace

TEST_CASE("parameter counts match the layout arithmetic") {
  // flat_mlp, 10 classes, 5 joints: enc 15->64, fc 64->1024, out 1024->10.
  Classifier f(Arch::flat_mlp, 10, 5, chain_edges(5));
  REQUIRE(f.param_count() == (15 * 64 + 64) + (64 * 1024 + 1024) + (1024 * 10 + 10));
  REQUIRE(f.param_count() == 77834);

  Classifier t(Arch::temporal_conv, 10, 5, chain_edges(5));
  REQUIRE(t.param_count() == (32 * 15 * 5 + 32) + (48 * 32 * 5 + 48) +
                                 (48 * 1024 + 1024) + (1024 * 10 + 10));
  REQUIRE(t.param_count() == 70586);

  Classifier g(Arch::graph_conv, 10, 5, chain_edges(5));
  REQUIRE(g.param_count() == (3 * 24 + 24) + (24 * 48 + 48) + (48 * 1200 + 1200) +
                                 (1200 * 10 + 10));
  REQUIRE(g.param_count() == 72106);
}

TEST_CASE("initialization is seed-deterministic") {
  for (Arch a : {Arch::flat_mlp, Arch::temporal_conv, Arch::graph_conv}) {
    Classifier c1 = make(a), c2 = make(a);
    REQUIRE(c1.params == c2.params);
    Classifier c3 = make(a, 6, 4, 6);
    REQUIRE(c1.params != c3.params);
  }
}

TEST_CASE("parameter gradients agree with finite differences") {
  MotionSequence x = random_motion(12, 4, 99);
  for (Arch a : {Arch::flat_mlp, Arch::temporal_conv, Arch::graph_conv}) {
    Classifier c = make(a);
    Eigen::VectorXd g;
    c.loss_grad(x, 2, &g, nullptr);
    Stream pick(31);
    for (int trial = 0; trial < 30; ++trial) {
      int i = static_cast<int>(pick.below(c.param_count()));
      const double h = 1e-5;
      double orig = c.params[i];
      c.params[i] = orig + h;
      double lp = c.loss_grad(x, 2, nullptr, nullptr);
      c.params[i] = orig - h;
      double lm = c.loss_grad(x, 2, nullptr, nullptr);
      c.params[i] = orig;
      double fd = (lp - lm) / (2 * h);
      REQUIRE_THAT(g[i], Catch::Matchers::WithinAbs(fd, 1e-6) ||
                             Catch::Matchers::WithinRel(fd, 1e-4));
    }
  }
}

TEST_CASE("input gradients agree with finite differences") {
  MotionSequence x = random_motion(10, 4, 17);
  for (Arch a : {Arch::flat_mlp, Arch::temporal_conv, Arch::graph_conv}) {
    Classifier c = make(a);
    Eigen::MatrixXd g;
    c.loss_grad(x, 1, nullptr, &g);
    REQUIRE(g.rows() == x.frames.rows());
    REQUIRE(g.cols() == x.frames.cols());
    Stream pick(32);
    for (int trial = 0; trial < 25; ++trial) {
      int t = static_cast<int>(pick.below(x.frames.rows()));
      int j = static_cast<int>(pick.below(x.frames.cols()));
      const double h = 1e-6;
      MotionSequence xp = x, xm = x;
      xp.frames(t, j) += h;
      xm.frames(t, j) -= h;
      double fd = (c.loss_grad(xp, 1, nullptr, nullptr) -
                   c.loss_grad(xm, 1, nullptr, nullptr)) /
                  (2 * h);
      REQUIRE_THAT(g(t, j), Catch::Matchers::WithinAbs(fd, 1e-7) ||
                                Catch::Matchers::WithinRel(fd, 1e-4));
    }
  }
}

TEST_CASE("frame order is irrelevant to flat_mlp but not to temporal_conv") {
  MotionSequence x = random_motion(16, 4, 55);
  MotionSequence rev = x;
  rev.frames = x.frames.colwise().reverse();

  Classifier f = make(Arch::flat_mlp);
  REQUIRE((f.logits(x) - f.logits(rev)).cwiseAbs().maxCoeff() < 1e-12);

  Classifier t = make(Arch::temporal_conv);
  REQUIRE((t.logits(x) - t.logits(rev)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("graph stage reduces to a per-joint map without edges") {
  // With no edges the normalized adjacency is the identity, so permuting
  // joints permutes nothing across them: logits must be invariant under any
  // joint relabeling combined with the same relabeling of the input.
  Classifier g(Arch::graph_conv, 4, 3, {});
  g.init_params(8);
  MotionSequence x = random_motion(8, 3, 2);
  MotionSequence xp = x;
  // Swap joints 0 and 2 everywhere.
  xp.frames.middleCols(0, 3).swap(xp.frames.middleCols(6, 3));
  REQUIRE((g.logits(x) - g.logits(xp)).cwiseAbs().maxCoeff() < 1e-12);

  // With chain edges, joints interact, and a swap that is not a graph
  // automorphism changes the output.  (On a 3-chain, swapping the endpoints
  // IS an automorphism, so use a 4-chain and swap joints 0 and 2.)
  Classifier gc(Arch::graph_conv, 4, 4, chain_edges(4));
  gc.init_params(8);
  MotionSequence y = random_motion(8, 4, 2);
  MotionSequence yp = y;
  yp.frames.middleCols(0, 3).swap(yp.frames.middleCols(6, 3));
  REQUIRE((gc.logits(y) - gc.logits(yp)).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("checkpoint round trip preserves behavior exactly") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "tasar_model_ckpt";
  fs::create_directories(dir);
  MotionSequence x = random_motion(10, 4, 3);
  for (Arch a : {Arch::flat_mlp, Arch::temporal_conv, Arch::graph_conv}) {
    Classifier c = make(a);
    // Simulate float32 storage before comparing.
    for (int i = 0; i < c.params.size(); ++i)
      c.params[i] = static_cast<double>(static_cast<float>(c.params[i]));
    fs::path p = dir / (arch_name(a) + ".ckpt");
    c.save(p);
    Classifier back = Classifier::load(p);
    REQUIRE(back.arch() == c.arch());
    REQUIRE(back.params == c.params);
    REQUIRE(back.logits(x) == c.logits(x));
  }
  fs::remove_all(dir);
}

TEST_CASE("tampered checkpoints fail the checksum") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "tasar_model_tamper";
  fs::create_directories(dir);
  Classifier c = make(Arch::flat_mlp);
  fs::path p = dir / "m.ckpt";
  c.save(p);
  auto bytes = load_bytes(p);
  bytes[bytes.size() - 3] ^= 0x40;  // flip a payload bit
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  REQUIRE_THROWS(Classifier::load(p));
  fs::remove_all(dir);
}

TEST_CASE("training is deterministic") {
  SyntheticSpec s;
  s.class_count = 3;
  s.joint_count = 3;
  s.frame_count = 16;
  s.samples_per_class = 8;
  s.seed = 21;
  Dataset ds = generate_synthetic(s);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 4;
  Classifier c1(Arch::flat_mlp, 3, 3, ds.skeleton_edges);
  Classifier c2(Arch::flat_mlp, 3, 3, ds.skeleton_edges);
  train_classifier(c1, ds, cfg);
  train_classifier(c2, ds, cfg);
  REQUIRE(c1.params == c2.params);
}

TEST_CASE("a small model learns a small problem") {
  SyntheticSpec s;
  s.class_count = 3;
  s.joint_count = 3;
  s.frame_count = 24;
  s.samples_per_class = 16;
  s.noise_std = 0.01;
  s.seed = 31;
  Dataset ds = generate_synthetic(s);
  Classifier c(Arch::flat_mlp, 3, 3, ds.skeleton_edges);
  TrainConfig cfg;
  cfg.epochs = 25;
  cfg.learning_rate = 2e-3;
  cfg.seed = 1;
  train_classifier(c, ds, cfg);
  REQUIRE(evaluate_accuracy(c, ds) >= 0.9);
}

TEST_CASE("temporal model reaches 90 percent held-out on the reference corpus") {
  SyntheticSpec s;  // defaults: 10 classes, 5 joints, 60 frames, 50 per class
  s.seed = 1;
  Dataset ds = generate_synthetic(s);
  auto [train, test] = stratified_split(ds, 0.8, 2);
  Classifier c(Arch::temporal_conv, s.class_count, s.joint_count, ds.skeleton_edges);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.seed = 3;
  train_classifier(c, train, cfg);
  REQUIRE(evaluate_accuracy(c, test) >= 0.9);
}
