// Command-line front end: dataset generation/inspection, classifier and head
// training, recurrence fitting, attacks, loss surfaces, and the transfer
// benchmark.  Thin argument plumbing over the library; all logic lives in
// include/tasar.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tasar/attack.hpp"
#include "tasar/bayes.hpp"
#include "tasar/bench.hpp"
#include "tasar/data.hpp"
#include "tasar/landscape.hpp"
#include "tasar/models.hpp"
#include "tasar/tvar.hpp"
#include "tasar/version.hpp"

namespace fs = std::filesystem;
using namespace tasar;

namespace {

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s;
  s.class_count = j.value("class_count", s.class_count);
  s.joint_count = j.value("joint_count", j.value("joints", s.joint_count));
  s.frame_count = j.value("frame_count", j.value("frames", s.frame_count));
  s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
  s.noise_std = j.value("noise_std", s.noise_std);
  s.seed = j.value("seed", s.seed);
  return s;
}

int cmd_data_gen(const std::string& spec_path, const std::string& out_dir,
                 const std::string& stem) {
  const SyntheticSpec spec = spec_from_json(load_json(spec_path));
  const Dataset ds = generate_synthetic(spec);
  fs::create_directories(out_dir);
  save_dataset(ds, out_dir, stem);
  std::printf("wrote %s (%d samples, %d classes, %d joints, %d frames)\n",
              (fs::path(out_dir) / (stem + ".json")).string().c_str(),
              ds.size(), ds.class_count, ds.joint_count,
              static_cast<int>(ds.motions.empty() ? 0 : ds.motions[0].frame_count()));
  return 0;
}

int cmd_data_info(const std::string& manifest) {
  const Dataset ds = load_dataset(manifest);
  std::printf("manifest:    %s\n", manifest.c_str());
  std::printf("samples:     %d\n", ds.size());
  std::printf("classes:     %d\n", ds.class_count);
  std::printf("joints:      %d\n", ds.joint_count);
  std::printf("frames:      %d\n",
              static_cast<int>(ds.motions.empty() ? 0 : ds.motions[0].frame_count()));
  std::printf("bone edges:  %zu\n", ds.skeleton_edges.size());
  std::vector<int> per_class(ds.class_count, 0);
  for (int l : ds.labels) ++per_class[l];
  std::printf("per class:  ");
  for (int n : per_class) std::printf(" %d", n);
  std::printf("\n");
  return 0;
}

int cmd_model_train(const std::string& arch, const std::string& data,
                    const std::string& out, const TrainConfig& cfg) {
  const Dataset ds = load_dataset(data);
  TrainReport report;
  Classifier c = train_classifier(arch_from_name(arch), ds, cfg, &report);
  const double train_acc = evaluate_accuracy(c, ds);
  json extra{{"seed", cfg.seed},
             {"epochs", cfg.epochs},
             {"train_accuracy", train_acc}};
  if (report.final_val_acc >= 0.0) extra["val_accuracy"] = report.final_val_acc;
  c.save(out, extra);
  std::printf("wrote %s (train accuracy %.3f", out.c_str(), train_acc);
  if (report.final_val_acc >= 0.0)
    std::printf(", held-out %.3f", report.final_val_acc);
  std::printf(")\n");
  return 0;
}

int cmd_bayes_train(const std::string& base_path, const std::string& data,
                    const std::string& out, const DualBayesConfig& cfg,
                    bool dual) {
  const Classifier base = Classifier::load(base_path);
  const Dataset ds = load_dataset(data);
  HeadEnsemble ens = train_heads(base, ds, cfg, dual);
  save_ensemble(ens, out);
  std::printf("wrote %s (K=%d, H=%d, %s, %d head params vs %d base params)\n",
              out.c_str(), ens.size(), ens.hidden(), dual ? "dual" : "plain",
              ens.total_params(), base.param_count());
  return 0;
}

int cmd_tvar_fit(const std::string& data, int order, const std::string& report,
                 int index) {
  const Dataset ds = load_dataset(data);
  if (index < 0 || index >= ds.size())
    throw std::invalid_argument("tvar fit: sample index out of range");
  const MotionSequence& seq = ds.motions[index];
  json out{{"data", data},
           {"sample_index", index},
           {"order", order},
           {"frame_count", seq.frame_count()},
           {"joint_count", seq.joint_count()}};
  auto residual_norms = [](const Eigen::MatrixXd& r) {
    std::vector<double> norms;
    for (int i = 0; i < r.rows(); ++i) norms.push_back(r.row(i).norm());
    return norms;
  };
  if (order == 1) {
    TVAR1Model m = fit_tvar1(seq);
    out["a"] = std::vector<double>(m.a.begin(), m.a.end());
    out["b"] = std::vector<double>(m.b.begin(), m.b.end());
    out["residual_norms"] = residual_norms(m.residuals);
    out["max_abs_residual"] = m.residuals.cwiseAbs().maxCoeff();
  } else if (order == 2) {
    TVAR2Model m = fit_tvar2(seq);
    out["c"] = std::vector<double>(m.c.begin(), m.c.end());
    out["d"] = std::vector<double>(m.d.begin(), m.d.end());
    out["e"] = std::vector<double>(m.e.begin(), m.e.end());
    out["residual_norms"] = residual_norms(m.residuals);
    out["max_abs_residual"] = m.residuals.cwiseAbs().maxCoeff();
  } else {
    throw std::invalid_argument("tvar fit: order must be 1 or 2");
  }
  save_json(report, out);
  std::printf("wrote %s (order %d, %d modeled frames, max residual %.3e)\n",
              report.c_str(), order,
              static_cast<int>(out["residual_norms"].size()),
              out["max_abs_residual"].get<double>());
  return 0;
}

int cmd_attack_run(const std::string& method_name, const std::string& base_path,
                   const std::string& heads_path, const std::string& data,
                   const std::string& out, AttackConfig cfg, int limit,
                   int target) {
  const AttackMethod method = method_from_name(method_name);
  const Classifier base = Classifier::load(base_path);
  const Dataset ds = load_dataset(data);
  HeadEnsemble ens;
  if (method == AttackMethod::tasar) {
    if (heads_path.empty())
      throw std::invalid_argument("attack run: --method tasar needs --heads");
    ens = load_ensemble(heads_path);
  }
  if (target >= 0) cfg.mode = AttackMode{true, target};

  const fs::path out_path(out);
  const fs::path trace_dir =
      out_path.parent_path() / (out_path.stem().string() + "_traces");
  fs::create_directories(trace_dir.empty() ? "." : trace_dir);

  const int n = limit > 0 ? std::min(limit, ds.size()) : ds.size();
  const std::uint64_t run_seed = cfg.seed;
  json samples = json::array();
  int hits = 0, attacked = 0;
  for (int i = 0; i < n; ++i) {
    if (cfg.mode.targeted && ds.labels[i] == cfg.mode.target_label) continue;
    cfg.seed = mix(run_seed, static_cast<std::uint64_t>(i));
    AdvResult r;
    switch (method) {
      case AttackMethod::ifgsm:
        r = ifgsm(ClassifierEval(base), ds.motions[i], ds.labels[i], cfg);
        break;
      case AttackMethod::mifgsm:
        r = mifgsm(ClassifierEval(base), ds.motions[i], ds.labels[i], cfg);
        break;
      case AttackMethod::tasar:
        r = tasar_attack(base, ens, ds.motions[i], ds.labels[i], cfg);
        break;
    }
    const std::string trace_name = "sample_" + std::to_string(i) + ".json";
    save_json(trace_dir / trace_name,
              json{{"index", i}, {"loss_trace", r.loss_trace}});
    samples.push_back(
        {{"index", i},
         {"label", ds.labels[i]},
         {"success", r.success},
         {"final_prediction", r.final_prediction},
         {"clean_prediction", r.clean_prediction},
         {"linf", r.linf_distance},
         {"loss_trace_path", (trace_dir.filename() / trace_name).string()}});
    ++attacked;
    if (r.success) ++hits;
  }
  if (attacked == 0) throw std::runtime_error("attack run: no samples attacked");
  cfg.seed = run_seed;
  json result{{"method", method_name},
              {"base", base_path},
              {"data", data},
              {"epsilon", cfg.epsilon},
              {"alpha", cfg.alpha()},
              {"iterations", cfg.iterations},
              {"seed", run_seed},
              {"targeted", cfg.mode.targeted},
              {"attacked", attacked},
              {"success_rate", 100.0 * hits / attacked},
              {"samples", samples}};
  if (!heads_path.empty()) result["heads"] = heads_path;
  if (cfg.mode.targeted) result["target_label"] = cfg.mode.target_label;
  save_json(out_path, result);
  std::printf("wrote %s (%d/%d succeeded, %.2f%%)\n", out.c_str(), hits,
              attacked, 100.0 * hits / attacked);
  return 0;
}

int cmd_landscape_grid(const std::string& model, const std::string& data,
                       const std::string& out, int grid_points,
                       double half_range, int samples, std::uint64_t seed) {
  const Classifier c = Classifier::load(model);
  const Dataset ds = load_dataset(data);
  const int n = std::min(samples, ds.size());
  if (n == 0) throw std::invalid_argument("landscape grid: empty dataset");

  Classifier probe = c;
  auto eval = [&](const Eigen::VectorXd& p) {
    probe.params = p;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += cross_entropy(probe.logits(ds.motions[i]), ds.labels[i], nullptr);
    return acc / n;
  };
  auto [d1, d2] = random_directions(c.params, c.layout().slices, seed);
  LandscapeGrid g = loss_grid(eval, c.params, d1, d2, half_range, grid_points);

  std::string csv = "alpha,beta,loss\n";
  char buf[96];
  for (int i = 0; i < grid_points; ++i)
    for (int j = 0; j < grid_points; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", g.alphas[i],
                    g.betas[j], g.losses(i, j));
      csv += buf;
    }
  save_blob(out, std::vector<unsigned char>(csv.begin(), csv.end()));
  const fs::path summary_path = fs::path(out).replace_extension(".json");
  save_json(summary_path, json{{"center_loss", g.center_loss},
                               {"sharpness", sharpness_metric(g)},
                               {"grid", grid_points},
                               {"half_range", half_range},
                               {"eval_samples", n},
                               {"seed", seed}});
  std::printf("wrote %s and %s (center %.6f, sharpness %.6f)\n", out.c_str(),
              summary_path.string().c_str(), g.center_loss, sharpness_metric(g));
  return 0;
}

int cmd_bench_run(const std::string& config_path, const std::string& out_dir) {
  const fs::path cp(config_path);
  BenchConfig cfg = BenchConfig::from_json(load_json(cp), cp.parent_path());
  TransferMatrix tm = run_grid(cfg);
  export_report(tm, out_dir);
  std::printf("%s", render_table(tm).c_str());
  std::printf("wrote %s\n", (fs::path(out_dir) / "results.json").string().c_str());
  return 0;
}

int cmd_bench_report(const std::string& results, const std::string& format) {
  TransferMatrix tm = import_report(results);
  if (format == "csv")
    std::printf("%s", render_csv(tm).c_str());
  else
    std::printf("%s", render_table(tm).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skeleton-motion transfer-attack toolkit"};
  app.set_version_flag("--version", std::string("tasar ") + kVersion);
  app.require_subcommand(1);

  // data gen / data info
  auto* data_cmd = app.add_subcommand("data", "dataset utilities");
  data_cmd->require_subcommand(1);
  std::string spec_path, gen_out, gen_stem = "data";
  auto* gen = data_cmd->add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "generator spec JSON")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--stem", gen_stem, "manifest/tensor file stem");
  std::string info_manifest;
  auto* info = data_cmd->add_subcommand("info", "describe a dataset");
  info->add_option("manifest", info_manifest, "dataset manifest")->required();

  // model train
  auto* model_cmd = app.add_subcommand("model", "classifier utilities");
  model_cmd->require_subcommand(1);
  std::string arch = "temporal_conv", model_data, model_out;
  TrainConfig tc;
  auto* mtrain = model_cmd->add_subcommand("train", "train a classifier");
  mtrain->add_option("--arch", arch, "flat_mlp|temporal_conv|graph_conv");
  mtrain->add_option("--data", model_data, "dataset manifest")->required();
  mtrain->add_option("--out", model_out, "checkpoint path")->required();
  mtrain->add_option("--epochs", tc.epochs);
  mtrain->add_option("--batch", tc.batch_size);
  mtrain->add_option("--lr", tc.learning_rate);
  mtrain->add_option("--weight-decay", tc.weight_decay);
  mtrain->add_option("--val-fraction", tc.val_fraction);
  mtrain->add_option("--seed", tc.seed);

  // bayes train
  auto* bayes_cmd = app.add_subcommand("bayes", "appended-head utilities");
  bayes_cmd->require_subcommand(1);
  std::string bayes_base, bayes_data, bayes_out;
  DualBayesConfig bc;
  bool dual = false;
  auto* btrain = bayes_cmd->add_subcommand("train", "train a head ensemble");
  btrain->add_option("--base", bayes_base, "frozen classifier checkpoint")->required();
  btrain->add_option("--data", bayes_data, "dataset manifest")->required();
  btrain->add_option("--out", bayes_out, "ensemble checkpoint path")->required();
  btrain->add_option("--K", bc.K, "head count");
  btrain->add_option("--M", bc.M, "noise draws per head");
  btrain->add_option("--sigma", bc.sigma, "weight-noise std");
  btrain->add_option("--xi", bc.xi, "confidence level");
  btrain->add_option("--hidden", bc.head_hidden, "hidden width (0: class count)");
  btrain->add_option("--epochs", bc.epochs);
  btrain->add_option("--batch", bc.batch_size);
  btrain->add_option("--lr", bc.learning_rate);
  btrain->add_option("--seed", bc.seed);
  btrain->add_flag("--dual", dual, "min-max (sharpness-aware) training");

  // tvar fit
  auto* tvar_cmd = app.add_subcommand("tvar", "recurrence fitting");
  tvar_cmd->require_subcommand(1);
  std::string tvar_data, tvar_report;
  int tvar_order = 1, tvar_index = 0;
  auto* tfit = tvar_cmd->add_subcommand("fit", "fit per-frame recurrences");
  tfit->add_option("--data", tvar_data, "dataset manifest")->required();
  tfit->add_option("--order", tvar_order, "1 or 2")->required();
  tfit->add_option("--report", tvar_report, "output JSON path")->required();
  tfit->add_option("--index", tvar_index, "sample index (default 0)");

  // attack run
  auto* attack_cmd = app.add_subcommand("attack", "adversarial attacks");
  attack_cmd->require_subcommand(1);
  std::string atk_method = "ifgsm", atk_base, atk_heads, atk_data, atk_out;
  AttackConfig ac;
  double atk_alpha = -1.0;
  int atk_limit = 0, atk_target = -1;
  auto* arun = attack_cmd->add_subcommand("run", "attack a dataset");
  arun->add_option("--method", atk_method, "ifgsm|mifgsm|tasar");
  arun->add_option("--base", atk_base, "surrogate checkpoint")->required();
  arun->add_option("--heads", atk_heads, "head-ensemble checkpoint (tasar)");
  arun->add_option("--data", atk_data, "dataset manifest")->required();
  arun->add_option("--out", atk_out, "results JSON path")->required();
  arun->add_option("--eps", ac.epsilon, "l-inf budget");
  arun->add_option("--alpha", atk_alpha, "step size (default eps/50)");
  arun->add_option("--iters", ac.iterations, "iteration count");
  arun->add_option("--mu", ac.momentum_mu, "momentum decay (mifgsm)");
  arun->add_option("--M", ac.M, "noise draws per head (tasar)");
  arun->add_option("--sigma", ac.sigma, "weight-noise std (tasar)");
  arun->add_option("--xi", ac.xi, "confidence level (tasar)");
  arun->add_option("--w0", ac.weights.w0, "position-gradient weight");
  arun->add_option("--w1", ac.weights.w1, "first-order dynamics weight");
  arun->add_option("--w2", ac.weights.w2, "second-order dynamics weight");
  arun->add_option("--refit", ac.refit_interval, "recurrence refit period");
  arun->add_option("--seed", ac.seed);
  arun->add_option("--limit", atk_limit, "attack only the first N samples");
  arun->add_option("--target", atk_target, "targeted mode: target class");

  // landscape grid
  auto* land_cmd = app.add_subcommand("landscape", "loss-surface tools");
  land_cmd->require_subcommand(1);
  std::string land_model, land_data, land_out;
  int land_g = 21, land_samples = 256;
  double land_range = 1.0;
  std::uint64_t land_seed = 1;
  auto* lgrid = land_cmd->add_subcommand("grid", "evaluate a loss surface");
  lgrid->add_option("--model", land_model, "classifier checkpoint")->required();
  lgrid->add_option("--data", land_data, "dataset manifest")->required();
  lgrid->add_option("--out", land_out, "CSV output path")->required();
  lgrid->add_option("--grid", land_g, "points per axis (odd)");
  lgrid->add_option("--half-range", land_range, "max offset along each direction");
  lgrid->add_option("--samples", land_samples, "evaluation subset size");
  lgrid->add_option("--seed", land_seed, "direction seed");

  // bench run / bench report
  auto* bench_cmd = app.add_subcommand("bench", "transfer benchmark");
  bench_cmd->require_subcommand(1);
  std::string bench_config, bench_out, bench_results, bench_format = "table";
  auto* brun = bench_cmd->add_subcommand("run", "run an attack/transfer grid");
  brun->add_option("--config", bench_config, "benchmark config JSON")->required();
  brun->add_option("--out", bench_out, "output directory")->required();
  auto* breport = bench_cmd->add_subcommand("report", "render saved results");
  breport->add_option("results", bench_results, "results.json path")->required();
  breport->add_option("--format", bench_format, "table|csv")
      ->check(CLI::IsMember({"table", "csv"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_data_gen(spec_path, gen_out, gen_stem);
    if (info->parsed()) return cmd_data_info(info_manifest);
    if (mtrain->parsed()) return cmd_model_train(arch, model_data, model_out, tc);
    if (btrain->parsed())
      return cmd_bayes_train(bayes_base, bayes_data, bayes_out, bc, dual);
    if (tfit->parsed())
      return cmd_tvar_fit(tvar_data, tvar_order, tvar_report, tvar_index);
    if (arun->parsed()) {
      if (atk_alpha > 0.0) ac.step_alpha = atk_alpha;
      return cmd_attack_run(atk_method, atk_base, atk_heads, atk_data, atk_out,
                            ac, atk_limit, atk_target);
    }
    if (lgrid->parsed())
      return cmd_landscape_grid(land_model, land_data, land_out, land_g,
                                land_range, land_samples, land_seed);
    if (brun->parsed()) return cmd_bench_run(bench_config, bench_out);
    if (breport->parsed()) return cmd_bench_report(bench_results, bench_format);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
