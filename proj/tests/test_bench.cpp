#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>

#include "tasar/bench.hpp"

using namespace tasar;
namespace fs = std::filesystem;

namespace {

struct BenchFixture {
  fs::path dir;
  Dataset data;
  fs::path manifest, ckpt_a, ckpt_b, heads_a;
};

const BenchFixture& fixture() {
  static BenchFixture f = [] {
    BenchFixture x;
    x.dir = fs::temp_directory_path() / "tasar_bench_fixture";
    fs::create_directories(x.dir);
    SyntheticSpec spec;
    spec.class_count = 4;
    spec.joint_count = 3;
    spec.frame_count = 12;
    spec.samples_per_class = 6;
    spec.seed = 5;
    x.data = generate_synthetic(spec);
    save_dataset(x.data, x.dir, "data");
    x.manifest = x.dir / "data.json";
    TrainConfig tc;
    tc.epochs = 4;
    tc.learning_rate = 2e-3;
    tc.seed = 1;
    Classifier a = train_classifier(Arch::flat_mlp, x.data, tc);
    tc.seed = 2;
    Classifier b = train_classifier(Arch::flat_mlp, x.data, tc);
    x.ckpt_a = x.dir / "model_a.ckpt";
    a.save(x.ckpt_a);
    x.ckpt_b = x.dir / "model_b.ckpt";
    b.save(x.ckpt_b);
    DualBayesConfig bc;
    bc.K = 2;
    bc.epochs = 1;
    HeadEnsemble heads = train_heads(Classifier::load(x.ckpt_a), x.data, bc, true);
    x.heads_a = x.dir / "heads_a.ckpt";
    save_ensemble(heads, x.heads_a);
    return x;
  }();
  return f;
}

AdvResult outcome(int true_label, int clean_pred, int final_pred, int target = -1) {
  AdvResult r;
  r.true_label = true_label;
  r.clean_prediction = clean_pred;
  r.final_prediction = final_pred;
  r.target_label = target;
  return r;
}

BenchConfig two_target_config(int seeds = 2) {
  const BenchFixture& f = fixture();
  BenchConfig cfg;
  cfg.data = f.manifest.string();
  cfg.surrogates = {{"model_a", f.ckpt_a.string(), f.heads_a.string()}};
  cfg.targets = {{"model_a", f.ckpt_a.string(), ""},
                 {"model_b", f.ckpt_b.string(), ""}};
  AttackSpec ifg;
  ifg.name = "ifgsm";
  ifg.method = AttackMethod::ifgsm;
  ifg.config.epsilon = 0.01;
  ifg.config.step_alpha = 0.002;
  ifg.config.iterations = 3;
  AttackSpec tas;
  tas.name = "tasar";
  tas.method = AttackMethod::tasar;
  tas.config.epsilon = 0.01;
  tas.config.step_alpha = 0.002;
  tas.config.iterations = 2;
  tas.config.M = 1;
  cfg.attacks = {ifg, tas};
  cfg.sample_limit = 6;
  cfg.seeds.clear();
  for (int s = 1; s <= seeds; ++s) cfg.seeds.push_back(s);
  return cfg;
}

}  // namespace

TEST_CASE("success rates follow the ratio definition") {
  std::vector<AdvResult> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(outcome(0, 0, i < 7 ? 1 : 0));
  REQUIRE(attack_success_rate(rs, false, SuccessBasis::all_samples) == 70.0);

  std::vector<AdvResult> all_flipped(4, outcome(2, 2, 3));
  REQUIRE(attack_success_rate(all_flipped, false, SuccessBasis::all_samples) ==
          100.0);

  // Clean results restricted to originally-correct samples cannot "succeed".
  std::vector<AdvResult> clean;
  for (int i = 0; i < 5; ++i) clean.push_back(outcome(1, 1, 1));
  REQUIRE(attack_success_rate(clean, false, SuccessBasis::originally_correct) ==
          0.0);
}

TEST_CASE("the originally-correct basis filters the denominator") {
  std::vector<AdvResult> rs;
  rs.push_back(outcome(0, 0, 1));  // counted, success
  rs.push_back(outcome(0, 2, 1));  // clean mistake: filtered out
  rs.push_back(outcome(0, 0, 0));  // counted, failure
  rs.push_back(outcome(1, 3, 1));  // filtered out
  REQUIRE(attack_success_rate(rs, false, SuccessBasis::originally_correct) == 50.0);
  REQUIRE(attack_success_rate(rs, false, SuccessBasis::all_samples) == 50.0);

  std::vector<AdvResult> none{outcome(0, 1, 2), outcome(1, 0, 2)};
  REQUIRE_THROWS_AS(
      attack_success_rate(none, false, SuccessBasis::originally_correct),
      std::runtime_error);
}

TEST_CASE("targeted success requires hitting the chosen label") {
  std::vector<AdvResult> rs;
  rs.push_back(outcome(0, 0, 2, 2));  // hit
  rs.push_back(outcome(0, 0, 1, 2));  // flipped but missed the target
  rs.push_back(outcome(1, 1, 1, 3));  // unmoved
  rs.push_back(outcome(1, 1, 3, 3));  // hit
  REQUIRE(attack_success_rate(rs, true, SuccessBasis::all_samples) == 50.0);
}

TEST_CASE("a one-cell grid reports only the white-box diagonal") {
  const BenchFixture& f = fixture();
  BenchConfig cfg;
  cfg.data = f.manifest.string();
  cfg.surrogates = {{"model_a", f.ckpt_a.string(), ""}};
  cfg.targets = {{"model_a", f.ckpt_a.string(), ""}};
  AttackSpec atk;
  atk.name = "ifgsm";
  atk.method = AttackMethod::ifgsm;
  atk.config.iterations = 2;
  cfg.attacks = {atk};
  cfg.sample_limit = 5;
  cfg.seeds = {1};
  TransferMatrix tm = run_grid(cfg);
  REQUIRE(tm.cells.size() == 1);
  REQUIRE(tm.cells.begin()->second.white_box);
  REQUIRE(tm.seed_averages.empty());  // no transfer targets at all
  REQUIRE(tm.averages.empty());
  REQUIRE(tm.crafts.size() == 1);
  REQUIRE(tm.crafts.begin()->second.size() == 5);
}

TEST_CASE("duplicate target checkpoints score identically") {
  const BenchFixture& f = fixture();
  BenchConfig cfg = two_target_config(1);
  cfg.attacks.resize(1);
  cfg.targets.push_back({"model_a_again", f.ckpt_a.string(), ""});
  TransferMatrix tm = run_grid(cfg);
  const CellResult& original = tm.cells.at({"ifgsm", "model_a", "model_a", 1});
  const CellResult& twin = tm.cells.at({"ifgsm", "model_a", "model_a_again", 1});
  REQUIRE(original.asr == twin.asr);
  REQUIRE(original.samples == twin.samples);
  REQUIRE(twin.white_box);  // resolved to the surrogate's checkpoint
}

TEST_CASE("averages and cells are recomputable from stored provenance") {
  BenchConfig cfg = two_target_config(2);
  TransferMatrix tm = run_grid(cfg);
  REQUIRE(tm.cells.size() == 2 * 2 * 2);  // attacks x targets x seeds

  for (const auto& [key, cell] : tm.cells) {
    REQUIRE(cell.asr >= 0.0);
    REQUIRE(cell.asr <= 100.0);
    int hits = 0;
    for (const auto& o : cell.samples)
      if (o.adv_prediction != o.true_label) ++hits;
    REQUIRE(cell.asr == 100.0 * hits / cell.n);
    REQUIRE(cell.n == static_cast<int>(cell.samples.size()));
    const bool diagonal = std::get<1>(key) == std::get<2>(key);
    REQUIRE(cell.white_box == diagonal);
  }

  // Seed averages: mean over non-white-box targets; overall: mean over seeds.
  for (const auto& [key, ave] : tm.seed_averages) {
    double sum = 0.0;
    int cnt = 0;
    for (const auto& [ck, cell] : tm.cells)
      if (std::get<0>(ck) == std::get<0>(key) && std::get<1>(ck) == std::get<1>(key) &&
          std::get<3>(ck) == std::get<2>(key) && !cell.white_box) {
        sum += cell.asr;
        ++cnt;
      }
    REQUIRE(cnt == 1);  // single transfer target in this fixture
    REQUIRE(ave == sum / cnt);
  }
  for (const auto& [key, ave] : tm.averages) {
    double sum = 0.0;
    int cnt = 0;
    for (const auto& [sk, sv] : tm.seed_averages)
      if (std::get<0>(sk) == key.first && std::get<1>(sk) == key.second) {
        sum += sv;
        ++cnt;
      }
    REQUIRE(cnt == 2);
    REQUIRE(ave == sum / cnt);
  }

  // Craft records stay within the attack budget.
  for (const auto& [key, records] : tm.crafts) {
    REQUIRE(records.size() == 6);
    for (const auto& r : records) REQUIRE(r.linf <= 0.01 + 1e-9);
  }
}

TEST_CASE("grid runs are deterministic end to end") {
  BenchConfig cfg = two_target_config(1);
  TransferMatrix a = run_grid(cfg);
  TransferMatrix b = run_grid(cfg);
  REQUIRE(a == b);
  const fs::path d1 = fixture().dir / "out_det1";
  const fs::path d2 = fixture().dir / "out_det2";
  export_report(a, d1);
  export_report(b, d2);
  REQUIRE(load_bytes(d1 / "results.json") == load_bytes(d2 / "results.json"));
  REQUIRE(load_bytes(d1 / "results.csv") == load_bytes(d2 / "results.csv"));
}

TEST_CASE("reports round-trip and stay consistent across formats") {
  BenchConfig cfg = two_target_config(2);
  TransferMatrix tm = run_grid(cfg);
  const fs::path out = fixture().dir / "out_report";
  export_report(tm, out);

  TransferMatrix back = import_report(out / "results.json");
  REQUIRE(back == tm);
  REQUIRE(back.version == kVersion);

  const fs::path out2 = fixture().dir / "out_report2";
  export_report(back, out2);
  REQUIRE(load_bytes(out / "results.json") == load_bytes(out2 / "results.json"));

  // CSV: one header line plus one line per cell.
  const auto csv_bytes = load_bytes(out / "results.csv");
  const std::string csv(csv_bytes.begin(), csv_bytes.end());
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  REQUIRE(lines == static_cast<long>(tm.cells.size()) + 1);

  // Text table carries each per-(attack, surrogate) transfer average.
  const auto table_bytes = load_bytes(out / "results.txt");
  const std::string table(table_bytes.begin(), table_bytes.end());
  REQUIRE(table.find("Surrogate: model_a") != std::string::npos);
  REQUIRE(table.find("Ave") != std::string::npos);
  for (const auto& [key, ave] : tm.averages) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", ave);
    REQUIRE(table.find(buf) != std::string::npos);
  }
}

TEST_CASE("targeted grids draw per-sample targets away from the labels") {
  BenchConfig cfg = two_target_config(1);
  cfg.attacks.resize(1);  // plain iterative attack is enough
  cfg.targeted = true;
  TransferMatrix tm = run_grid(cfg);
  for (const auto& [key, records] : tm.crafts)
    for (const auto& r : records) {
      REQUIRE(r.target_label >= 0);
      REQUIRE(r.target_label < fixture().data.class_count);
      REQUIRE(r.target_label != r.true_label);
    }
  for (const auto& [key, cell] : tm.cells) {
    int hits = 0;
    for (const auto& o : cell.samples)
      if (o.adv_prediction == o.target_label) ++hits;
    REQUIRE(cell.asr == 100.0 * hits / cell.n);
  }
}

TEST_CASE("config files resolve relative paths against their directory") {
  const BenchFixture& f = fixture();
  json j{{"data", "data.json"},
         {"surrogates",
          json::array({{{"name", "model_a"},
                        {"checkpoint", "model_a.ckpt"},
                        {"heads", "heads_a.ckpt"}}})},
         {"targets", json::array({{{"name", "model_b"},
                                   {"checkpoint", "model_b.ckpt"}}})},
         {"attacks", json::array({{{"method", "mifgsm"},
                                   {"epsilon", 0.01},
                                   {"alpha", 0.002},
                                   {"iterations", 2},
                                   {"momentum_mu", 0.9}}})},
         {"sample_limit", 4},
         {"seeds", json::array({3})},
         {"success_basis", "originally_correct"}};
  BenchConfig cfg = BenchConfig::from_json(j, f.dir);
  REQUIRE(cfg.data == f.manifest.string());
  REQUIRE(cfg.attacks.size() == 1);
  REQUIRE(cfg.attacks[0].name == "mifgsm");  // defaults to the method name
  REQUIRE(cfg.attacks[0].config.epsilon == 0.01);
  REQUIRE(cfg.attacks[0].config.alpha() == 0.002);
  REQUIRE(cfg.basis == SuccessBasis::originally_correct);
  // The tiny fixture model misses the first few samples, which would leave the
  // correctness filter empty; run the grid on the unfiltered basis instead.
  cfg.basis = SuccessBasis::all_samples;
  TransferMatrix tm = run_grid(cfg);
  REQUIRE(tm.cells.size() == 1);

  // The echo embedded in results carries the resolved configuration.
  BenchConfig echo = BenchConfig::from_json(tm.config, f.dir);
  REQUIRE(echo.to_json() == cfg.to_json());
}

TEST_CASE("configuration errors surface before any attack runs") {
  const BenchFixture& f = fixture();

  SECTION("empty sections") {
    BenchConfig cfg;
    REQUIRE_THROWS_AS(run_grid(cfg), std::invalid_argument);
  }
  SECTION("duplicate attack names") {
    BenchConfig cfg = two_target_config(1);
    cfg.attacks[1].name = cfg.attacks[0].name;
    REQUIRE_THROWS_AS(run_grid(cfg), std::invalid_argument);
  }
  SECTION("one name bound to two checkpoints") {
    BenchConfig cfg = two_target_config(1);
    cfg.targets[1].name = "model_a";  // but points at model_b.ckpt
    REQUIRE_THROWS_AS(run_grid(cfg), std::invalid_argument);
  }
  SECTION("class-count mismatch against the dataset") {
    SyntheticSpec spec;
    spec.class_count = 5;
    spec.joint_count = 3;
    spec.frame_count = 12;
    spec.samples_per_class = 4;
    spec.seed = 9;
    Dataset other = generate_synthetic(spec);
    TrainConfig tc;
    tc.epochs = 1;
    Classifier wrong = train_classifier(Arch::flat_mlp, other, tc);
    const fs::path wrong_path = f.dir / "wrong.ckpt";
    wrong.save(wrong_path);
    BenchConfig cfg = two_target_config(1);
    cfg.targets[1] = {"wrong", wrong_path.string(), ""};
    REQUIRE_THROWS_AS(run_grid(cfg), std::invalid_argument);
  }
  SECTION("tasar surrogate without heads") {
    BenchConfig cfg = two_target_config(1);
    cfg.surrogates[0].heads.clear();
    REQUIRE_THROWS_AS(run_grid(cfg), std::invalid_argument);
  }
  SECTION("heads bound to a different base") {
    BenchConfig cfg = two_target_config(1);
    cfg.surrogates[0] = {"model_b", f.ckpt_b.string(), f.heads_a.string()};
    REQUIRE_THROWS_AS(run_grid(cfg), std::invalid_argument);
  }
}
