#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>

#include "tasar/data.hpp"

using namespace tasar;

static SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.class_count = 4;
  s.joint_count = 4;
  s.frame_count = 24;
  s.samples_per_class = 6;
  s.noise_std = 0.02;
  s.seed = 11;
  return s;
}

TEST_CASE("generation is deterministic in the seed") {
  Dataset a = generate_synthetic(small_spec());
  Dataset b = generate_synthetic(small_spec());
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    REQUIRE(a.labels[i] == b.labels[i]);
    REQUIRE(a.motions[i].frames == b.motions[i].frames);
  }
  SyntheticSpec other = small_spec();
  other.seed = 12;
  Dataset c = generate_synthetic(other);
  REQUIRE(a.motions[0].frames != c.motions[0].frames);
}

TEST_CASE("samples sharing all latents are identical when noise is off") {
  Stream skel(mix(5, 101));
  Eigen::MatrixXd rest = detail::rest_pose(4, skel);
  Stream cs(mix(5, 999));
  auto params = detail::draw_class_params(4, cs);
  Stream n1(1), n2(2);  // unused at noise 0; different on purpose
  MotionSequence a = detail::synthesize_sample(rest, params, 20, 7, 0.0, n1);
  MotionSequence b = detail::synthesize_sample(rest, params, 20, 7, 0.0, n2);
  REQUIRE(a.frames == b.frames);
  // A different time shift gives a different clip.
  MotionSequence c = detail::synthesize_sample(rest, params, 20, 8, 0.0, n1);
  REQUIRE(a.frames != c.frames);
}

TEST_CASE("integer time shifts translate the zero-noise signal exactly") {
  Stream skel(mix(5, 101));
  Eigen::MatrixXd rest = detail::rest_pose(3, skel);
  Stream cs(mix(5, 999));
  auto params = detail::draw_class_params(3, cs);
  Stream n(1);
  MotionSequence a = detail::synthesize_sample(rest, params, 30, 2, 0.0, n);
  MotionSequence b = detail::synthesize_sample(rest, params, 30, 5, 0.0, n);
  // b's frame t equals a's frame t+3 wherever both exist.
  for (int t = 0; t + 3 < 30; ++t)
    REQUIRE(b.frames.row(t) == a.frames.row(t + 3));
}

TEST_CASE("coordinates stay inside the unit box") {
  SyntheticSpec s = small_spec();
  s.noise_std = 0.3;  // force clamping
  Dataset ds = generate_synthetic(s);
  for (const auto& m : ds.motions) {
    REQUIRE(m.frames.maxCoeff() <= 0.5);
    REQUIRE(m.frames.minCoeff() >= -0.5);
  }
  // Coordinate range never exceeds 1, so a fraction-of-range budget is a
  // fraction of 1 at most.
  double lo = 1e9, hi = -1e9;
  for (const auto& m : ds.motions) {
    lo = std::min(lo, m.frames.minCoeff());
    hi = std::max(hi, m.frames.maxCoeff());
  }
  REQUIRE(hi - lo <= 1.0);
}

TEST_CASE("every class gets the requested number of samples") {
  Dataset ds = generate_synthetic(small_spec());
  std::map<int, int> counts;
  for (int l : ds.labels) counts[l]++;
  REQUIRE(counts.size() == 4);
  for (auto& [label, n] : counts) REQUIRE(n == 6);
  REQUIRE_THROWS_AS(generate_synthetic(SyntheticSpec{.class_count = 1}),
                    std::invalid_argument);
}

TEST_CASE("dataset save/load round-trips bit-exactly") {
  namespace fs = std::filesystem;
  Dataset ds = generate_synthetic(small_spec());
  fs::path dir = fs::temp_directory_path() / "tasar_ds_test";
  save_dataset(ds, dir, "sample");
  Dataset back = load_dataset(dir / "sample.json");
  REQUIRE(back.class_count == ds.class_count);
  REQUIRE(back.joint_count == ds.joint_count);
  REQUIRE(back.frame_count == ds.frame_count);
  REQUIRE(back.skeleton_edges == ds.skeleton_edges);
  REQUIRE(back.size() == ds.size());
  for (int i = 0; i < ds.size(); ++i) {
    REQUIRE(back.labels[i] == ds.labels[i]);
    REQUIRE(back.motions[i].frames == ds.motions[i].frames);
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest validation rejects malformed input") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "tasar_ds_bad";
  fs::create_directories(dir);
  save_json(dir / "m.json", json{{"class_count", 3}});
  REQUIRE_THROWS(load_dataset(dir / "m.json"));

  Dataset ds = generate_synthetic(small_spec());
  save_dataset(ds, dir, "ok");
  json m = load_json(dir / "ok.json");
  m["samples"][0]["offset"] = 1u << 30;  // past end of blob
  save_json(dir / "broken.json", m);
  REQUIRE_THROWS(load_dataset(dir / "broken.json"));
  fs::remove_all(dir);
}

TEST_CASE("frame subsampling picks evenly spaced frames") {
  MotionSequence m = MotionSequence::zeros(10, 2);
  for (int t = 0; t < 10; ++t) m.frames.row(t).setConstant(t);
  MotionSequence s = subsample_frames(m, 4);
  REQUIRE(s.frame_count() == 4);
  // Indices round(i * 9 / 3) = 0, 3, 6, 9.
  REQUIRE(s.frames(0, 0) == 0.0);
  REQUIRE(s.frames(1, 0) == 3.0);
  REQUIRE(s.frames(2, 0) == 6.0);
  REQUIRE(s.frames(3, 0) == 9.0);
  // Short enough already: verbatim copy.
  MotionSequence same = subsample_frames(m, 10);
  REQUIRE(same.frames == m.frames);
  MotionSequence more = subsample_frames(m, 15);
  REQUIRE(more.frames == m.frames);
  REQUIRE_THROWS_AS(subsample_frames(m, 2), std::invalid_argument);
}

TEST_CASE("segmentation drops the remainder") {
  MotionSequence m = MotionSequence::zeros(10, 2);
  for (int t = 0; t < 10; ++t) m.frames.row(t).setConstant(t);
  auto segs = segment_sequence(m, 4);
  REQUIRE(segs.size() == 2);
  REQUIRE(segs[0].frames(0, 0) == 0.0);
  REQUIRE(segs[0].frames(3, 0) == 3.0);
  REQUIRE(segs[1].frames(0, 0) == 4.0);
  REQUIRE(segs[1].frames(3, 0) == 7.0);
  REQUIRE(segment_sequence(m, 11).empty());
  REQUIRE(segment_sequence(m, 5).size() == 2);
  REQUIRE_THROWS_AS(segment_sequence(m, 2), std::invalid_argument);
}

TEST_CASE("stratified split partitions and keeps class balance") {
  SyntheticSpec s = small_spec();
  s.samples_per_class = 10;
  Dataset ds = generate_synthetic(s);
  auto [a, b] = stratified_split(ds, 0.8, 77);
  REQUIRE(a.size() + b.size() == ds.size());
  std::map<int, int> ca, cb;
  for (int l : a.labels) ca[l]++;
  for (int l : b.labels) cb[l]++;
  for (int c = 0; c < s.class_count; ++c) {
    REQUIRE(ca[c] == 8);
    REQUIRE(cb[c] == 2);
  }
  // Deterministic in the seed.
  auto [a2, b2] = stratified_split(ds, 0.8, 77);
  REQUIRE(a2.labels == a.labels);
  for (int i = 0; i < a.size(); ++i)
    REQUIRE(a2.motions[i].frames == a.motions[i].frames);
  auto [a3, b3] = stratified_split(ds, 0.8, 78);
  REQUIRE(a3.labels.size() == a.labels.size());
  REQUIRE_THROWS_AS(stratified_split(ds, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(stratified_split(ds, 1.0, 1), std::invalid_argument);
}

TEST_CASE("single frames hold little class information") {
  // Same rest pose and overlapping amplitude ranges, and every sample gets a
  // random time shift: the class-conditional first-frame distributions
  // overlap heavily.  A nearest-class-mean rule on frame 0 should do barely
  // better than chance (sanity ceiling: 2x chance).
  SyntheticSpec s;
  s.class_count = 5;
  s.joint_count = 5;
  s.frame_count = 40;
  s.samples_per_class = 40;
  s.noise_std = 0.02;
  s.seed = 3;
  Dataset ds = generate_synthetic(s);
  auto [train, test] = stratified_split(ds, 0.5, 9);
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(s.class_count, 15);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(s.class_count);
  for (int i = 0; i < train.size(); ++i) {
    means.row(train.labels[i]) += train.motions[i].frames.row(0);
    counts[train.labels[i]] += 1.0;
  }
  for (int c = 0; c < s.class_count; ++c) means.row(c) /= counts[c];
  int hit = 0;
  for (int i = 0; i < test.size(); ++i) {
    int best = 0;
    double bd = 1e18;
    for (int c = 0; c < s.class_count; ++c) {
      double d = (test.motions[i].frames.row(0) - means.row(c)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    if (best == test.labels[i]) ++hit;
  }
  double acc = static_cast<double>(hit) / test.size();
  REQUIRE(acc < 2.0 / s.class_count);
}
