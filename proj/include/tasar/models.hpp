#ifndef TASAR_MODELS_HPP
#define TASAR_MODELS_HPP

// Frozen-feature classifiers over motion clips.  Three architectures with
// deliberately different inductive biases so cross-model transfer is a real
// test: a per-frame MLP with mean pooling, a temporal convolution stack, and
// a graph convolution over the skeleton adjacency.  All are trained with the
// same Adam loop and share one flat-parameter convention, which keeps
// checkpointing, landscape slicing, and finite-difference checks uniform.
//
// Forward/backward passes are written out by hand; gradients are exact and
// deterministic (single-threaded accumulation in a fixed order).

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "tasar/data.hpp"
#include "tasar/io.hpp"
#include "tasar/numeric.hpp"
#include "tasar/rng.hpp"

namespace tasar {

enum class Arch { flat_mlp, temporal_conv, graph_conv };

inline std::string arch_name(Arch a) {
  switch (a) {
    case Arch::flat_mlp: return "flat_mlp";
    case Arch::temporal_conv: return "temporal_conv";
    case Arch::graph_conv: return "graph_conv";
  }
  throw std::logic_error("arch_name: bad enum");
}

inline Arch arch_from_name(const std::string& s) {
  if (s == "flat_mlp") return Arch::flat_mlp;
  if (s == "temporal_conv") return Arch::temporal_conv;
  if (s == "graph_conv") return Arch::graph_conv;
  throw std::invalid_argument("unknown architecture: " + s);
}

struct LayerSlice {
  std::string name;
  int offset = 0;
  int size = 0;
  std::array<int, 2> shape{0, 0};  // rows x cols; bias: {n, 1}
};

// Untargeted attacks maximize loss at the true label; targeted attacks
// minimize loss at a chosen label (which must differ from the true one).
struct AttackMode {
  bool targeted = false;
  int target_label = -1;

  int label_for_loss(int true_label, int class_count) const {
    if (!targeted) return true_label;
    if (target_label < 0 || target_label >= class_count)
      throw std::invalid_argument("targeted mode: label out of range");
    if (target_label == true_label)
      throw std::invalid_argument("targeted mode: target equals true label");
    return target_label;
  }
};

struct ParamLayout {
  std::vector<LayerSlice> slices;
  int total = 0;

  void add(const std::string& name, int rows, int cols) {
    slices.push_back({name, total, rows * cols, {rows, cols}});
    total += rows * cols;
  }
  const LayerSlice& at(const std::string& name) const {
    for (const auto& s : slices)
      if (s.name == name) return s;
    throw std::invalid_argument("no parameter slice named " + name);
  }
};

namespace detail {

// Widths chosen so the classifier head (post-pooling stack) dominates the
// parameter count: appended inference heads must stay a tiny fraction of the
// base model, and pooling-side width is cheap on compute.
inline constexpr int kFlatEnc = 64;
inline constexpr int kFlatHid = 1024;
inline constexpr int kConvC1 = 32;
inline constexpr int kConvC2 = 48;
inline constexpr int kConvK = 5;
inline constexpr int kConvHid = 1024;
inline constexpr int kGraphG1 = 24;
inline constexpr int kGraphG2 = 48;
inline constexpr int kGraphHid = 1200;

using CMap = Eigen::Map<const Eigen::MatrixXd>;
using MMap = Eigen::Map<Eigen::MatrixXd>;
using CVec = Eigen::Map<const Eigen::VectorXd>;
using MVec = Eigen::Map<Eigen::VectorXd>;

inline CMap cmat(const Eigen::VectorXd& p, const LayerSlice& s) {
  return CMap(p.data() + s.offset, s.shape[0], s.shape[1]);
}
inline MMap mmat(Eigen::VectorXd& p, const LayerSlice& s) {
  return MMap(p.data() + s.offset, s.shape[0], s.shape[1]);
}
inline CVec cvec(const Eigen::VectorXd& p, const LayerSlice& s) {
  return CVec(p.data() + s.offset, s.size);
}
inline MVec mvec(Eigen::VectorXd& p, const LayerSlice& s) {
  return MVec(p.data() + s.offset, s.size);
}

// Symmetrically normalized adjacency with self-loops.
inline Eigen::MatrixXd normalized_adjacency(
    int joints, const std::vector<std::array<int, 2>>& edges) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(joints, joints);
  for (const auto& e : edges) {
    a(e[0], e[1]) = 1.0;
    a(e[1], e[0]) = 1.0;
  }
  Eigen::VectorXd d = a.rowwise().sum();
  Eigen::VectorXd dinv = d.array().rsqrt();
  return dinv.asDiagonal() * a * dinv.asDiagonal();
}

}  // namespace detail

// Cached activations of one forward pass.  Shapes depend on the architecture;
// unused members stay empty.
struct ForwardTrace {
  Eigen::MatrixXd x;                 // input as given, T x (J*3)
  Eigen::MatrixXd h1_pre, h1;        // frame-wise / stacked stage 1
  Eigen::MatrixXd h2_pre, h2;        // stage 2 (temporal_conv / graph_conv)
  Eigen::MatrixXd ax, ah1;           // graph_conv: adjacency-mixed inputs
  Eigen::VectorXd pooled;
  Eigen::VectorXd u_pre, u;          // post-pool hidden
  Eigen::VectorXd logits;
};

class Classifier {
 public:
  Classifier(Arch arch, int class_count, int joint_count,
             std::vector<std::array<int, 2>> edges)
      : arch_(arch),
        class_count_(class_count),
        joint_count_(joint_count),
        edges_(std::move(edges)) {
    if (class_count_ < 2) throw std::invalid_argument("classifier: class_count < 2");
    if (joint_count_ < 2) throw std::invalid_argument("classifier: joint_count < 2");
    layout_ = build_layout();
    params = Eigen::VectorXd::Zero(layout_.total);
    if (arch_ == Arch::graph_conv)
      adj_ = detail::normalized_adjacency(joint_count_, edges_);
  }

  Arch arch() const { return arch_; }
  int class_count() const { return class_count_; }
  int joint_count() const { return joint_count_; }
  int param_count() const { return layout_.total; }
  const ParamLayout& layout() const { return layout_; }
  const std::vector<std::array<int, 2>>& edges() const { return edges_; }

  Eigen::VectorXd params;

  // He-style init; biases zero.  Fully determined by the seed.
  void init_params(std::uint64_t seed) {
    Stream rng(mix(seed, 606));
    params.setZero();
    for (const auto& s : layout_.slices) {
      if (s.shape[1] == 1) continue;  // bias
      double std = std::sqrt(2.0 / s.shape[1]);
      auto w = detail::mmat(params, s);
      for (int c = 0; c < s.shape[1]; ++c)
        for (int r = 0; r < s.shape[0]; ++r) w(r, c) = std * rng.gaussian();
    }
  }

  Eigen::VectorXd logits(const MotionSequence& m) const {
    ForwardTrace t;
    forward(m, t);
    return t.logits;
  }

  int predict(const MotionSequence& m) const { return argmax(logits(m)); }

  void forward(const MotionSequence& m, ForwardTrace& t) const {
    check_input(m);
    t.x = m.frames;
    switch (arch_) {
      case Arch::flat_mlp: forward_flat(t); break;
      case Arch::temporal_conv: forward_conv(t); break;
      case Arch::graph_conv: forward_graph(t); break;
    }
  }

  // Cross-entropy of `label` plus, optionally, gradients with respect to the
  // parameters and/or the input coordinates.
  double loss_grad(const MotionSequence& m, int label, Eigen::VectorXd* gparams,
                   Eigen::MatrixXd* ginput) const {
    ForwardTrace t;
    forward(m, t);
    Eigen::VectorXd dlogits;
    double loss = cross_entropy(t.logits, label, &dlogits);
    backward(t, dlogits, gparams, ginput);
    return loss;
  }

  // Backprop from d loss / d logits; reusable by callers that append extra
  // computation after the logits.
  void backward(const ForwardTrace& t, const Eigen::VectorXd& dlogits,
                Eigen::VectorXd* gparams, Eigen::MatrixXd* ginput) const {
    if (!gparams && !ginput) return;
    if (gparams) gparams->setZero(layout_.total);
    if (ginput) ginput->setZero(t.x.rows(), t.x.cols());
    switch (arch_) {
      case Arch::flat_mlp: backward_flat(t, dlogits, gparams, ginput); break;
      case Arch::temporal_conv: backward_conv(t, dlogits, gparams, ginput); break;
      case Arch::graph_conv: backward_graph(t, dlogits, gparams, ginput); break;
    }
  }

  json header() const {
    return json{{"format", "tasar-checkpoint-v1"},
                {"kind", "classifier"},
                {"arch", arch_name(arch_)},
                {"class_count", class_count_},
                {"joint_count", joint_count_},
                {"skeleton_edges", edges_},
                {"param_count", layout_.total},
                {"checksum", checksum_hex(payload_checksum(params))}};
  }

  // `extra` lets callers record provenance (training seed, data shape,
  // achieved accuracy) without the classifier itself carrying it.
  void save(const std::filesystem::path& path,
            const json& extra = json::object()) const {
    json h = header();
    for (const auto& [k, v] : extra.items()) h[k] = v;
    save_checkpoint(path, h, params);
  }

  static Classifier load(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.header.value("kind", "") != "classifier")
      throw std::runtime_error("not a classifier checkpoint: " + path.string());
    std::vector<std::array<int, 2>> edges;
    for (const auto& e : ck.header["skeleton_edges"])
      edges.push_back({e[0].get<int>(), e[1].get<int>()});
    Classifier c(arch_from_name(ck.header["arch"].get<std::string>()),
                 ck.header["class_count"].get<int>(),
                 ck.header["joint_count"].get<int>(), std::move(edges));
    if (ck.payload.size() != c.param_count())
      throw std::runtime_error("checkpoint parameter count mismatch");
    if (ck.header.contains("checksum") &&
        ck.header["checksum"].get<std::string>() !=
            checksum_hex(payload_checksum(ck.payload)))
      throw std::runtime_error("checkpoint checksum mismatch");
    c.params = ck.payload;
    return c;
  }

  static std::string checksum_hex(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
  }

 private:
  Arch arch_;
  int class_count_;
  int joint_count_;
  std::vector<std::array<int, 2>> edges_;
  ParamLayout layout_;
  Eigen::MatrixXd adj_;

  void check_input(const MotionSequence& m) const {
    if (m.joint_count() != joint_count_)
      throw std::invalid_argument("classifier: joint count mismatch");
    if (m.frame_count() < 1)
      throw std::invalid_argument("classifier: empty clip");
  }

  ParamLayout build_layout() const {
    using namespace detail;
    ParamLayout l;
    const int d = joint_count_ * 3;
    switch (arch_) {
      case Arch::flat_mlp:
        l.add("enc.w", kFlatEnc, d);
        l.add("enc.b", kFlatEnc, 1);
        l.add("fc.w", kFlatHid, kFlatEnc);
        l.add("fc.b", kFlatHid, 1);
        l.add("out.w", class_count_, kFlatHid);
        l.add("out.b", class_count_, 1);
        break;
      case Arch::temporal_conv:
        for (int k = 0; k < kConvK; ++k)
          l.add("conv1.w" + std::to_string(k), kConvC1, d);
        l.add("conv1.b", kConvC1, 1);
        for (int k = 0; k < kConvK; ++k)
          l.add("conv2.w" + std::to_string(k), kConvC2, kConvC1);
        l.add("conv2.b", kConvC2, 1);
        l.add("fc.w", kConvHid, kConvC2);
        l.add("fc.b", kConvHid, 1);
        l.add("out.w", class_count_, kConvHid);
        l.add("out.b", class_count_, 1);
        break;
      case Arch::graph_conv:
        l.add("g1.w", 3, kGraphG1);
        l.add("g1.b", kGraphG1, 1);
        l.add("g2.w", kGraphG1, kGraphG2);
        l.add("g2.b", kGraphG2, 1);
        l.add("fc.w", kGraphHid, kGraphG2);
        l.add("fc.b", kGraphHid, 1);
        l.add("out.w", class_count_, kGraphHid);
        l.add("out.b", class_count_, 1);
        break;
    }
    return l;
  }

  // Shared post-pool tail: u = relu(Wfc p + bfc); logits = Wout u + bout.
  void tail_forward(ForwardTrace& t) const {
    using namespace detail;
    t.u_pre = cmat(params, layout_.at("fc.w")) * t.pooled +
              cvec(params, layout_.at("fc.b"));
    t.u = t.u_pre.cwiseMax(0.0);
    t.logits = cmat(params, layout_.at("out.w")) * t.u +
               cvec(params, layout_.at("out.b"));
  }

  // Returns d loss / d pooled.
  Eigen::VectorXd tail_backward(const ForwardTrace& t,
                                const Eigen::VectorXd& dlogits,
                                Eigen::VectorXd* gparams) const {
    using namespace detail;
    if (gparams) {
      mmat(*gparams, layout_.at("out.w")).noalias() = dlogits * t.u.transpose();
      mvec(*gparams, layout_.at("out.b")) = dlogits;
    }
    Eigen::VectorXd du =
        cmat(params, layout_.at("out.w")).transpose() * dlogits;
    Eigen::VectorXd du_pre =
        (t.u_pre.array() > 0.0).select(du, 0.0);
    if (gparams) {
      mmat(*gparams, layout_.at("fc.w")).noalias() = du_pre * t.pooled.transpose();
      mvec(*gparams, layout_.at("fc.b")) = du_pre;
    }
    return cmat(params, layout_.at("fc.w")).transpose() * du_pre;
  }

  // --- flat_mlp -----------------------------------------------------------
  void forward_flat(ForwardTrace& t) const {
    using namespace detail;
    auto w1 = cmat(params, layout_.at("enc.w"));
    auto b1 = cvec(params, layout_.at("enc.b"));
    t.h1_pre = (t.x * w1.transpose()).rowwise() + b1.transpose();
    t.h1 = t.h1_pre.cwiseMax(0.0);
    t.pooled = t.h1.colwise().mean().transpose();
    tail_forward(t);
  }

  void backward_flat(const ForwardTrace& t, const Eigen::VectorXd& dlogits,
                     Eigen::VectorXd* gparams, Eigen::MatrixXd* ginput) const {
    using namespace detail;
    Eigen::VectorXd dpooled = tail_backward(t, dlogits, gparams);
    const double tn = static_cast<double>(t.x.rows());
    Eigen::MatrixXd dh1 =
        (t.h1_pre.array() > 0.0)
            .select((Eigen::MatrixXd::Ones(t.x.rows(), 1) *
                     (dpooled.transpose() / tn)),
                    0.0);
    auto w1 = cmat(params, layout_.at("enc.w"));
    if (gparams) {
      mmat(*gparams, layout_.at("enc.w")).noalias() = dh1.transpose() * t.x;
      mvec(*gparams, layout_.at("enc.b")) = dh1.colwise().sum().transpose();
    }
    if (ginput) ginput->noalias() = dh1 * w1;
  }

  // --- temporal_conv ------------------------------------------------------
  // Same-length 1-D convolution over time, zero padding, kernel kConvK.
  void conv_forward(const Eigen::MatrixXd& x, Eigen::MatrixXd& pre,
                    const char* wname, const char* bname) const {
    using namespace detail;
    const int tn = static_cast<int>(x.rows());
    const int pad = (kConvK - 1) / 2;
    pre.setZero(tn, layout_.at(std::string(wname) + "0").shape[0]);
    for (int k = 0; k < kConvK; ++k) {
      const int s = k - pad;
      const int lo = std::max(0, -s);
      const int len = std::min(tn, tn - s) - lo;
      if (len <= 0) continue;
      auto wk = cmat(params, layout_.at(std::string(wname) + std::to_string(k)));
      pre.middleRows(lo, len).noalias() +=
          x.middleRows(lo + s, len) * wk.transpose();
    }
    pre.rowwise() += cvec(params, layout_.at(bname)).transpose();
  }

  // Accumulates dW, db and returns d loss / d x for one conv stage.
  Eigen::MatrixXd conv_backward(const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& dpre, const char* wname,
                                const char* bname,
                                Eigen::VectorXd* gparams) const {
    using namespace detail;
    const int tn = static_cast<int>(x.rows());
    const int pad = (kConvK - 1) / 2;
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(tn, x.cols());
    for (int k = 0; k < kConvK; ++k) {
      const int s = k - pad;
      const int lo = std::max(0, -s);
      const int len = std::min(tn, tn - s) - lo;
      if (len <= 0) continue;
      auto wk = cmat(params, layout_.at(std::string(wname) + std::to_string(k)));
      dx.middleRows(lo + s, len).noalias() += dpre.middleRows(lo, len) * wk;
      if (gparams)
        mmat(*gparams, layout_.at(std::string(wname) + std::to_string(k)))
            .noalias() += dpre.middleRows(lo, len).transpose() *
                          x.middleRows(lo + s, len);
    }
    if (gparams)
      mvec(*gparams, layout_.at(bname)) += dpre.colwise().sum().transpose();
    return dx;
  }

  void forward_conv(ForwardTrace& t) const {
    conv_forward(t.x, t.h1_pre, "conv1.w", "conv1.b");
    t.h1 = t.h1_pre.cwiseMax(0.0);
    conv_forward(t.h1, t.h2_pre, "conv2.w", "conv2.b");
    t.h2 = t.h2_pre.cwiseMax(0.0);
    t.pooled = t.h2.colwise().mean().transpose();
    tail_forward(t);
  }

  void backward_conv(const ForwardTrace& t, const Eigen::VectorXd& dlogits,
                     Eigen::VectorXd* gparams, Eigen::MatrixXd* ginput) const {
    Eigen::VectorXd dpooled = tail_backward(t, dlogits, gparams);
    const double tn = static_cast<double>(t.x.rows());
    Eigen::MatrixXd dh2 =
        (t.h2_pre.array() > 0.0)
            .select(Eigen::MatrixXd::Ones(t.x.rows(), 1) *
                        (dpooled.transpose() / tn),
                    0.0);
    Eigen::MatrixXd dh1 = conv_backward(t.h1, dh2, "conv2.w", "conv2.b", gparams);
    dh1 = (t.h1_pre.array() > 0.0).select(dh1, 0.0);
    Eigen::MatrixXd dx = conv_backward(t.x, dh1, "conv1.w", "conv1.b", gparams);
    if (ginput) *ginput = dx;
  }

  // --- graph_conv ---------------------------------------------------------
  // Frames stacked along rows in (T*J) x c matrices; the normalized adjacency
  // mixes joints within each frame.
  Eigen::MatrixXd mix_joints(const Eigen::MatrixXd& stacked) const {
    const int j = joint_count_;
    const int tn = static_cast<int>(stacked.rows()) / j;
    Eigen::MatrixXd out(stacked.rows(), stacked.cols());
    for (int t = 0; t < tn; ++t)
      out.middleRows(t * j, j).noalias() = adj_ * stacked.middleRows(t * j, j);
    return out;
  }

  Eigen::MatrixXd stack_joints(const Eigen::MatrixXd& frames) const {
    const int tn = static_cast<int>(frames.rows());
    const int j = joint_count_;
    Eigen::MatrixXd out(tn * j, 3);
    for (int t = 0; t < tn; ++t)
      for (int q = 0; q < j; ++q)
        out.row(t * j + q) = frames.row(t).segment(3 * q, 3);
    return out;
  }

  Eigen::MatrixXd unstack_joints(const Eigen::MatrixXd& stacked) const {
    const int j = joint_count_;
    const int tn = static_cast<int>(stacked.rows()) / j;
    Eigen::MatrixXd out(tn, 3 * j);
    for (int t = 0; t < tn; ++t)
      for (int q = 0; q < j; ++q)
        out.row(t).segment(3 * q, 3) = stacked.row(t * j + q);
    return out;
  }

  void forward_graph(ForwardTrace& t) const {
    using namespace detail;
    Eigen::MatrixXd xs = stack_joints(t.x);
    t.ax = mix_joints(xs);
    t.h1_pre = (t.ax * cmat(params, layout_.at("g1.w"))).rowwise() +
               cvec(params, layout_.at("g1.b")).transpose();
    t.h1 = t.h1_pre.cwiseMax(0.0);
    t.ah1 = mix_joints(t.h1);
    t.h2_pre = (t.ah1 * cmat(params, layout_.at("g2.w"))).rowwise() +
               cvec(params, layout_.at("g2.b")).transpose();
    t.h2 = t.h2_pre.cwiseMax(0.0);
    t.pooled = t.h2.colwise().mean().transpose();
    tail_forward(t);
  }

  void backward_graph(const ForwardTrace& t, const Eigen::VectorXd& dlogits,
                      Eigen::VectorXd* gparams, Eigen::MatrixXd* ginput) const {
    using namespace detail;
    Eigen::VectorXd dpooled = tail_backward(t, dlogits, gparams);
    const double rows = static_cast<double>(t.h2.rows());
    Eigen::MatrixXd dh2 =
        (t.h2_pre.array() > 0.0)
            .select(Eigen::MatrixXd::Ones(t.h2.rows(), 1) *
                        (dpooled.transpose() / rows),
                    0.0);
    if (gparams) {
      mmat(*gparams, layout_.at("g2.w")).noalias() = t.ah1.transpose() * dh2;
      mvec(*gparams, layout_.at("g2.b")) = dh2.colwise().sum().transpose();
    }
    Eigen::MatrixXd dah1 = dh2 * cmat(params, layout_.at("g2.w")).transpose();
    Eigen::MatrixXd dh1 = mix_joints(dah1);  // adjacency is symmetric
    dh1 = (t.h1_pre.array() > 0.0).select(dh1, 0.0);
    if (gparams) {
      mmat(*gparams, layout_.at("g1.w")).noalias() = t.ax.transpose() * dh1;
      mvec(*gparams, layout_.at("g1.b")) = dh1.colwise().sum().transpose();
    }
    if (ginput) {
      Eigen::MatrixXd dax = dh1 * cmat(params, layout_.at("g1.w")).transpose();
      *ginput = unstack_joints(mix_joints(dax));
    }
  }
};

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  int epochs = 15;
  int batch_size = 16;
  double learning_rate = 1e-3;  // Adam
  double weight_decay = 0.0;
  double val_fraction = 0.0;  // carve this share off for accuracy tracking
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_val_acc;  // empty when val_fraction == 0
  double final_val_acc = -1.0;
};

inline double evaluate_accuracy(const Classifier& c, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  int hit = 0;
  for (int i = 0; i < ds.size(); ++i)
    if (c.predict(ds.motions[i]) == ds.labels[i]) ++hit;
  return static_cast<double>(hit) / ds.size();
}

inline TrainReport train_classifier(Classifier& c, const Dataset& data,
                                    const TrainConfig& cfg) {
  // epochs == 0 is allowed: the classifier keeps its seeded initialization.
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) ||
      cfg.weight_decay < 0.0)
    throw std::invalid_argument("train_classifier: bad config");
  Dataset train = data;
  Dataset val;
  if (cfg.val_fraction > 0.0)
    std::tie(val, train) = stratified_split(data, cfg.val_fraction, mix(cfg.seed, 707));

  c.init_params(cfg.seed);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(c.param_count());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(c.param_count());
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long step = 0;

  TrainReport report;
  std::vector<int> order(train.size());
  for (int i = 0; i < train.size(); ++i) order[i] = i;

  Eigen::VectorXd g(c.param_count()), gsum(c.param_count());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Stream shuffle_rng(mix(mix(cfg.seed, 808), static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (int start = 0; start < train.size(); start += cfg.batch_size) {
      const int n = std::min(cfg.batch_size, train.size() - start);
      gsum.setZero();
      for (int k = 0; k < n; ++k) {
        const int i = order[start + k];
        loss_sum += c.loss_grad(train.motions[i], train.labels[i], &g, nullptr);
        gsum += g;
      }
      gsum /= n;
      if (cfg.weight_decay > 0.0) gsum += cfg.weight_decay * c.params;
      ++step;
      m = b1 * m + (1.0 - b1) * gsum;
      v = b2 * v + (1.0 - b2) * gsum.cwiseProduct(gsum);
      double corr = cfg.learning_rate * std::sqrt(1.0 - std::pow(b2, step)) /
                    (1.0 - std::pow(b1, step));
      c.params -= corr * (m.array() / (v.array().sqrt() + eps)).matrix();
    }
    report.epoch_loss.push_back(loss_sum / train.size());
    if (val.size() > 0)
      report.epoch_val_acc.push_back(evaluate_accuracy(c, val));
  }
  if (!report.epoch_val_acc.empty())
    report.final_val_acc = report.epoch_val_acc.back();
  return report;
}

inline Classifier train_classifier(Arch arch, const Dataset& data,
                                   const TrainConfig& cfg,
                                   TrainReport* report = nullptr) {
  Classifier c(arch, data.class_count, data.joint_count, data.skeleton_edges);
  TrainReport r = train_classifier(c, data, cfg);
  if (report) *report = r;
  return c;
}

inline Eigen::VectorXd forward_logits(const Classifier& c,
                                      const MotionSequence& x) {
  return c.logits(x);
}

inline std::pair<double, Eigen::MatrixXd> loss_and_input_grad(
    const Classifier& c, const MotionSequence& x, int y,
    const AttackMode& mode = {}) {
  Eigen::MatrixXd g;
  double loss = c.loss_grad(x, mode.label_for_loss(y, c.class_count()), nullptr, &g);
  return {loss, g};
}

}  // namespace tasar

#endif  // TASAR_MODELS_HPP
