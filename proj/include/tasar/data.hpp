#ifndef TASAR_DATA_HPP
#define TASAR_DATA_HPP

// Skeleton motion data: in-memory types, a synthetic motion generator, and
// dataset (de)serialization.
//
// A motion clip is a T x (J*3) matrix: one row per frame, columns grouped as
// (joint, coordinate) with coordinate fastest.  Values are stored as double in
// memory but are always float32 on disk; the generator rounds to float32 at
// creation so save/load round-trips are exact.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tasar/io.hpp"
#include "tasar/rng.hpp"

namespace tasar {

struct MotionSequence {
  Eigen::MatrixXd frames;  // T x (J*3)

  int frame_count() const { return static_cast<int>(frames.rows()); }
  int joint_count() const { return static_cast<int>(frames.cols()) / 3; }
  int dims() const { return static_cast<int>(frames.cols()); }

  double& at(int t, int j, int c) { return frames(t, 3 * j + c); }
  double at(int t, int j, int c) const { return frames(t, 3 * j + c); }

  static MotionSequence zeros(int t, int j) {
    MotionSequence m;
    m.frames = Eigen::MatrixXd::Zero(t, 3 * j);
    return m;
  }

  void validate() const {
    if (frames.rows() < 3)
      throw std::invalid_argument("motion: need at least 3 frames");
    if (frames.cols() < 3 || frames.cols() % 3 != 0)
      throw std::invalid_argument("motion: columns must be a positive multiple of 3");
    if (!frames.allFinite())
      throw std::invalid_argument("motion: non-finite coordinate");
  }
};

inline double linf_distance(const MotionSequence& a, const MotionSequence& b) {
  if (a.frames.rows() != b.frames.rows() || a.frames.cols() != b.frames.cols())
    throw std::invalid_argument("linf_distance: shape mismatch");
  return (a.frames - b.frames).cwiseAbs().maxCoeff();
}

struct Dataset {
  int class_count = 0;
  int joint_count = 0;
  int frame_count = 0;
  std::vector<std::array<int, 2>> skeleton_edges;
  std::vector<MotionSequence> motions;
  std::vector<int> labels;

  int size() const { return static_cast<int>(motions.size()); }

  void validate() const {
    if (class_count < 2) throw std::invalid_argument("dataset: class_count < 2");
    if (motions.size() != labels.size())
      throw std::invalid_argument("dataset: motions/labels size mismatch");
    for (const auto& e : skeleton_edges)
      if (e[0] < 0 || e[1] < 0 || e[0] >= joint_count || e[1] >= joint_count ||
          e[0] == e[1])
        throw std::invalid_argument("dataset: bad skeleton edge");
    for (std::size_t i = 0; i < motions.size(); ++i) {
      motions[i].validate();
      if (motions[i].frame_count() != frame_count ||
          motions[i].joint_count() != joint_count)
        throw std::invalid_argument("dataset: inconsistent sample shape");
      if (labels[i] < 0 || labels[i] >= class_count)
        throw std::invalid_argument("dataset: label out of range");
    }
  }
};

// ---------------------------------------------------------------------------
// Synthetic motions: a shared rest pose plus per-class sinusoidal joint
// trajectories.  Every sample of a class draws a random integer time shift, so
// single frames carry almost no class signal (classes share the rest pose and
// amplitude ranges); the discriminative structure is temporal.  Coordinates
// are clamped to [-0.5, 0.5], so the coordinate range never exceeds 1.

struct SyntheticSpec {
  int class_count = 10;
  int joint_count = 5;
  int frame_count = 60;
  int samples_per_class = 50;
  double noise_std = 0.02;
  std::uint64_t seed = 1;
};

namespace detail {

struct ClassMotionParams {
  // One (amplitude, frequency, phase) triple per joint coordinate.
  Eigen::MatrixXd amp, freq, phase;  // J x 3
};

inline Eigen::MatrixXd rest_pose(int joints, Stream& rng) {
  Eigen::MatrixXd rest(joints, 3);
  for (int j = 0; j < joints; ++j) {
    double span = joints > 1 ? static_cast<double>(j) / (joints - 1) : 0.5;
    rest(j, 0) = 0.1 * ((j % 3) - 1);
    rest(j, 1) = 0.55 * span - 0.275;
    rest(j, 2) = 0.0;
    for (int c = 0; c < 3; ++c) rest(j, c) += rng.uniform(-0.04, 0.04);
  }
  return rest;
}

inline ClassMotionParams draw_class_params(int joints, Stream& rng) {
  ClassMotionParams p;
  p.amp.resize(joints, 3);
  p.freq.resize(joints, 3);
  p.phase.resize(joints, 3);
  for (int j = 0; j < joints; ++j)
    for (int c = 0; c < 3; ++c) {
      p.amp(j, c) = rng.uniform(0.03, 0.13);
      p.freq(j, c) = rng.uniform(0.8, 5.5);
      p.phase(j, c) = rng.uniform(0.0, 6.283185307179586);
    }
  return p;
}

// Pure function of (rest, params, shift) plus the noise draws: two samples
// sharing those latents are identical.
inline MotionSequence synthesize_sample(const Eigen::MatrixXd& rest,
                                        const ClassMotionParams& p, int frames,
                                        int shift, double noise_std,
                                        Stream& noise_rng) {
  const int joints = static_cast<int>(rest.rows());
  MotionSequence m = MotionSequence::zeros(frames, joints);
  const double two_pi = 6.283185307179586;
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < joints; ++j)
      for (int c = 0; c < 3; ++c) {
        double arg = two_pi * p.freq(j, c) * (t + shift) / frames + p.phase(j, c);
        double v = rest(j, c) + p.amp(j, c) * std::sin(arg);
        if (noise_std > 0.0) v += noise_std * noise_rng.gaussian();
        v = std::clamp(v, -0.5, 0.5);
        m.frames(t, 3 * j + c) = static_cast<double>(static_cast<float>(v));
      }
  return m;
}

}  // namespace detail

inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.class_count < 2 || spec.joint_count < 2 || spec.frame_count < 3 ||
      spec.samples_per_class < 1 || spec.noise_std < 0.0)
    throw std::invalid_argument("generate_synthetic: bad spec");
  Dataset ds;
  ds.class_count = spec.class_count;
  ds.joint_count = spec.joint_count;
  ds.frame_count = spec.frame_count;
  for (int j = 0; j + 1 < spec.joint_count; ++j)
    ds.skeleton_edges.push_back({j, j + 1});

  Stream skel(mix(spec.seed, 101));
  Eigen::MatrixXd rest = detail::rest_pose(spec.joint_count, skel);

  std::vector<detail::ClassMotionParams> cls;
  for (int c = 0; c < spec.class_count; ++c) {
    Stream cs(mix(mix(spec.seed, 202), static_cast<std::uint64_t>(c)));
    cls.push_back(detail::draw_class_params(spec.joint_count, cs));
  }

  for (int c = 0; c < spec.class_count; ++c)
    for (int i = 0; i < spec.samples_per_class; ++i) {
      Stream ss(mix(mix(spec.seed, 303),
                    static_cast<std::uint64_t>(c) * spec.samples_per_class + i));
      int shift = static_cast<int>(ss.below(static_cast<std::uint64_t>(spec.frame_count)));
      ds.motions.push_back(detail::synthesize_sample(
          rest, cls[c], spec.frame_count, shift, spec.noise_std, ss));
      ds.labels.push_back(c);
    }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Preprocessing.

// Picks `target` frames at indices round(i * (T-1) / (target-1)).  A target of
// at least 3 keeps downstream temporal models well-posed.  If the clip is
// already short enough the copy is verbatim.
inline MotionSequence subsample_frames(const MotionSequence& m, int target) {
  if (target < 3) throw std::invalid_argument("subsample_frames: target < 3");
  const int t = m.frame_count();
  if (target >= t) return m;
  MotionSequence out;
  out.frames.resize(target, m.frames.cols());
  for (int i = 0; i < target; ++i) {
    int src = static_cast<int>(std::lround(static_cast<double>(i) * (t - 1) /
                                           (target - 1)));
    out.frames.row(i) = m.frames.row(src);
  }
  return out;
}

// Non-overlapping windows of exactly `window` frames; the tail remainder is
// dropped.  A clip shorter than one window yields no segments.
inline std::vector<MotionSequence> segment_sequence(const MotionSequence& m,
                                                    int window) {
  if (window < 3) throw std::invalid_argument("segment_sequence: window < 3");
  std::vector<MotionSequence> out;
  for (int start = 0; start + window <= m.frame_count(); start += window) {
    MotionSequence s;
    s.frames = m.frames.middleRows(start, window);
    out.push_back(std::move(s));
  }
  return out;
}

// Per-class split: shuffles each class's indices with its own stream, then
// sends round(fraction * n) of them to the first part.  Order within a part
// follows the original dataset order.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& ds,
                                                    double fraction,
                                                    std::uint64_t seed) {
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw std::invalid_argument("stratified_split: fraction must be in (0, 1)");
  std::vector<char> to_first(ds.motions.size(), 0);
  for (int c = 0; c < ds.class_count; ++c) {
    std::vector<int> idx;
    for (int i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == c) idx.push_back(i);
    if (idx.empty()) continue;
    Stream rs(mix(mix(seed, 404), static_cast<std::uint64_t>(c)));
    rs.shuffle(idx);
    int n = static_cast<int>(std::lround(fraction * idx.size()));
    n = std::clamp(n, idx.size() > 1 ? 1 : 0, static_cast<int>(idx.size()) - 1);
    for (int k = 0; k < n; ++k) to_first[idx[k]] = 1;
  }
  Dataset a = ds, b = ds;
  a.motions.clear(); a.labels.clear();
  b.motions.clear(); b.labels.clear();
  for (int i = 0; i < ds.size(); ++i) {
    Dataset& dst = to_first[i] ? a : b;
    dst.motions.push_back(ds.motions[i]);
    dst.labels.push_back(ds.labels[i]);
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Dataset on disk: JSON manifest + float32 blob.  Offsets count float32
// elements from the start of the named blob; each sample occupies
// frame_count * joint_count * 3 elements, frames outermost, coordinate
// innermost.

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                         const std::string& stem = "data") {
  ds.validate();
  std::filesystem::create_directories(dir);
  const std::string blob_name = stem + ".f32";
  const int per = ds.frame_count * ds.joint_count * 3;
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(per) * ds.motions.size() * 4);
  json samples = json::array();
  for (int i = 0; i < ds.size(); ++i) {
    Eigen::VectorXd flat(per);
    const auto& f = ds.motions[i].frames;
    for (int t = 0; t < ds.frame_count; ++t)
      flat.segment(static_cast<Eigen::Index>(t) * f.cols(), f.cols()) =
          f.row(t).transpose();
    auto b = f32_bytes(flat);
    samples.push_back({{"file", blob_name},
                       {"offset", static_cast<std::int64_t>(i) * per},
                       {"label", ds.labels[i]}});
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
  save_blob(dir / blob_name, bytes);
  json manifest{{"format", "tasar-dataset-v1"},
                {"class_count", ds.class_count},
                {"joint_count", ds.joint_count},
                {"frame_count", ds.frame_count},
                {"skeleton_edges", ds.skeleton_edges},
                {"samples", samples}};
  save_json(dir / (stem + ".json"), manifest);
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  json m = load_json(manifest_path);
  for (const char* key :
       {"class_count", "joint_count", "frame_count", "skeleton_edges", "samples"})
    if (!m.contains(key))
      throw std::runtime_error(std::string("dataset manifest missing key: ") + key);
  Dataset ds;
  ds.class_count = m["class_count"].get<int>();
  ds.joint_count = m["joint_count"].get<int>();
  ds.frame_count = m["frame_count"].get<int>();
  for (const auto& e : m["skeleton_edges"])
    ds.skeleton_edges.push_back({e[0].get<int>(), e[1].get<int>()});
  const std::filesystem::path dir = manifest_path.parent_path();
  std::map<std::string, std::vector<unsigned char>> blobs;
  const int per = ds.frame_count * ds.joint_count * 3;
  for (const auto& s : m["samples"]) {
    const std::string file = s["file"].get<std::string>();
    auto it = blobs.find(file);
    if (it == blobs.end())
      it = blobs.emplace(file, load_bytes(dir / file)).first;
    const auto& bytes = it->second;
    std::int64_t off = s["offset"].get<std::int64_t>();
    if (off < 0 || (off + per) * 4 > static_cast<std::int64_t>(bytes.size()))
      throw std::runtime_error("dataset sample offset out of range");
    Eigen::VectorXd flat =
        f32_parse(bytes.data() + off * 4, static_cast<std::size_t>(per));
    MotionSequence seq = MotionSequence::zeros(ds.frame_count, ds.joint_count);
    for (int t = 0; t < ds.frame_count; ++t)
      seq.frames.row(t) =
          flat.segment(static_cast<Eigen::Index>(t) * seq.frames.cols(),
                       seq.frames.cols())
              .transpose();
    ds.motions.push_back(std::move(seq));
    ds.labels.push_back(s["label"].get<int>());
  }
  ds.validate();
  return ds;
}

}  // namespace tasar

#endif  // TASAR_DATA_HPP
