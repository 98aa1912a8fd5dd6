#ifndef TASAR_BENCH_HPP
#define TASAR_BENCH_HPP

// Transfer benchmark: run every (attack, surrogate, seed) combination over a
// dataset slice, evaluate the crafted motions on every target model, and
// persist enough per-sample provenance that every reported rate can be
// recomputed from the report alone.
//
// Adversarial motions are crafted once per (attack, surrogate, seed) and
// shared across targets.  The surrogate-as-target cell (matched by resolved
// checkpoint path) is white-box and excluded from the "Ave" transfer average.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tasar/attack.hpp"
#include "tasar/bayes.hpp"
#include "tasar/data.hpp"
#include "tasar/io.hpp"
#include "tasar/models.hpp"
#include "tasar/version.hpp"

namespace tasar {

enum class AttackMethod { ifgsm, mifgsm, tasar };

inline std::string method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::ifgsm: return "ifgsm";
    case AttackMethod::mifgsm: return "mifgsm";
    case AttackMethod::tasar: return "tasar";
  }
  throw std::logic_error("method_name: bad enum");
}

inline AttackMethod method_from_name(const std::string& s) {
  if (s == "ifgsm") return AttackMethod::ifgsm;
  if (s == "mifgsm") return AttackMethod::mifgsm;
  if (s == "tasar") return AttackMethod::tasar;
  throw std::invalid_argument("unknown attack method: " + s);
}

enum class SuccessBasis { all_samples, originally_correct };

inline std::string basis_name(SuccessBasis b) {
  return b == SuccessBasis::all_samples ? "all_samples" : "originally_correct";
}

inline SuccessBasis basis_from_name(const std::string& s) {
  if (s == "all_samples") return SuccessBasis::all_samples;
  if (s == "originally_correct") return SuccessBasis::originally_correct;
  throw std::invalid_argument("unknown success basis: " + s);
}

struct ModelRef {
  std::string name;
  std::string checkpoint;
  std::string heads;  // ensemble checkpoint; required only for tasar surrogates
};

struct AttackSpec {
  std::string name;
  AttackMethod method = AttackMethod::ifgsm;
  AttackConfig config;
};

struct BenchConfig {
  std::string data;
  std::vector<ModelRef> surrogates;
  std::vector<ModelRef> targets;
  std::vector<AttackSpec> attacks;
  int sample_limit = 256;
  std::vector<std::uint64_t> seeds{1};
  SuccessBasis basis = SuccessBasis::all_samples;
  bool targeted = false;

  void validate() const {
    if (surrogates.empty() || targets.empty() || attacks.empty())
      throw std::invalid_argument(
          "bench config: need at least one surrogate, target, and attack");
    if (sample_limit < 1) throw std::invalid_argument("bench config: sample_limit < 1");
    if (seeds.empty()) throw std::invalid_argument("bench config: no seeds");
    std::set<std::string> names;
    for (const auto& a : attacks)
      if (!names.insert(a.name).second)
        throw std::invalid_argument("bench config: duplicate attack name " + a.name);
  }

  json to_json() const;
  static BenchConfig from_json(const json& j,
                               const std::filesystem::path& base_dir);
};

// ---------------------------------------------------------------------------
// Results.

struct SampleOutcome {
  int index = 0;
  int true_label = -1;
  int target_label = -1;  // -1 for untargeted
  int clean_prediction = -1;
  int adv_prediction = -1;

  bool operator==(const SampleOutcome&) const = default;
};

struct CellResult {
  double asr = 0.0;  // percent
  int n = 0;         // denominator after basis filtering
  bool white_box = false;
  std::vector<SampleOutcome> samples;

  bool operator==(const CellResult&) const = default;
};

struct CraftRecord {
  int index = 0;
  int true_label = -1;
  int target_label = -1;
  int clean_prediction = -1;  // surrogate side
  int final_prediction = -1;  // surrogate side
  double linf = 0.0;
  bool success = false;

  bool operator==(const CraftRecord&) const = default;
};

using CellKey = std::tuple<std::string, std::string, std::string, std::uint64_t>;
using CraftKey = std::tuple<std::string, std::string, std::uint64_t>;

struct TransferMatrix {
  std::string version;
  json config;
  std::map<CellKey, CellResult> cells;
  std::map<CraftKey, std::vector<CraftRecord>> crafts;
  // Mean ASR over non-white-box targets, per (attack, surrogate, seed), then
  // the per-(attack, surrogate) mean of those over seeds.
  std::map<CraftKey, double> seed_averages;
  std::map<std::pair<std::string, std::string>, double> averages;

  bool operator==(const TransferMatrix&) const = default;
};

// Success rate in percent.  Untargeted: adversarial prediction differs from
// the true label; targeted: it equals the chosen target label.  With
// basis = originally_correct, only samples the evaluating model classified
// correctly before the attack count.
inline double attack_success_rate(const std::vector<AdvResult>& results,
                                  bool targeted, SuccessBasis basis) {
  int n = 0, hits = 0;
  for (const auto& r : results) {
    if (basis == SuccessBasis::originally_correct &&
        r.clean_prediction != r.true_label)
      continue;
    ++n;
    bool ok = targeted ? r.final_prediction == r.target_label
                       : r.final_prediction != r.true_label;
    if (ok) ++hits;
  }
  if (n == 0)
    throw std::runtime_error(
        "attack_success_rate: no samples left after basis filtering");
  return 100.0 * hits / n;
}

namespace detail {

inline std::uint64_t name_tag(const std::string& s) {
  return fnv1a64(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

inline bool same_file(const std::string& a, const std::string& b) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::path ca = fs::weakly_canonical(a, ec);
  fs::path cb = fs::weakly_canonical(b, ec);
  return ca == cb && !ca.empty();
}

}  // namespace detail

inline TransferMatrix run_grid(const BenchConfig& cfg) {
  cfg.validate();
  Dataset data = load_dataset(cfg.data);

  // Load every model once; a name must always refer to the same checkpoint.
  std::map<std::string, const ModelRef*> refs;
  for (const auto& list : {&cfg.surrogates, &cfg.targets})
    for (const auto& r : *list) {
      auto [it, inserted] = refs.emplace(r.name, &r);
      if (!inserted && it->second->checkpoint != r.checkpoint)
        throw std::invalid_argument("bench: model name '" + r.name +
                                    "' bound to two different checkpoints");
    }
  std::map<std::string, Classifier> models;
  for (const auto& [name, ref] : refs) {
    Classifier c = Classifier::load(ref->checkpoint);
    if (c.class_count() != data.class_count || c.joint_count() != data.joint_count)
      throw std::invalid_argument("bench: model '" + name +
                                  "' is incompatible with the dataset");
    models.emplace(name, std::move(c));
  }

  const bool needs_heads = std::any_of(
      cfg.attacks.begin(), cfg.attacks.end(),
      [](const AttackSpec& a) { return a.method == AttackMethod::tasar; });
  std::map<std::string, HeadEnsemble> heads;
  if (needs_heads)
    for (const auto& s : cfg.surrogates) {
      if (s.heads.empty())
        throw std::invalid_argument("bench: surrogate '" + s.name +
                                    "' needs a head-ensemble checkpoint");
      HeadEnsemble e = load_ensemble(s.heads);
      if (e.base_checksum != payload_checksum(models.at(s.name).params))
        throw std::invalid_argument("bench: heads for '" + s.name +
                                    "' were built on a different base");
      heads.emplace(s.name, std::move(e));
    }

  const int n = std::min<int>(cfg.sample_limit, data.size());
  if (n < 1) throw std::invalid_argument("bench: empty dataset");

  std::map<std::string, std::vector<int>> clean_pred;
  for (const auto& [name, model] : models) {
    std::vector<int>& p = clean_pred[name];
    p.resize(n);
    for (int i = 0; i < n; ++i) p[i] = model.predict(data.motions[i]);
  }

  TransferMatrix tm;
  tm.version = kVersion;
  tm.config = cfg.to_json();

  for (const auto& a : cfg.attacks)
    for (const auto& s : cfg.surrogates) {
      const Classifier& surrogate = models.at(s.name);
      for (std::uint64_t seed : cfg.seeds) {
        const std::uint64_t lane =
            mix(mix(seed, detail::name_tag(a.name)), detail::name_tag(s.name));
        std::vector<AdvResult> crafted;
        crafted.reserve(n);
        for (int i = 0; i < n; ++i) {
          AttackConfig ac = a.config;
          ac.seed = mix(lane, static_cast<std::uint64_t>(i));
          const int y = data.labels[i];
          if (cfg.targeted) {
            Stream ts(mix(mix(lane, 0x7A96E7ull), static_cast<std::uint64_t>(i)));
            int t = static_cast<int>(ts.below(data.class_count - 1));
            if (t >= y) ++t;  // uniform over labels != y
            ac.mode = AttackMode{true, t};
          }
          switch (a.method) {
            case AttackMethod::ifgsm:
              crafted.push_back(ifgsm(ClassifierEval(surrogate),
                                      data.motions[i], y, ac));
              break;
            case AttackMethod::mifgsm:
              crafted.push_back(mifgsm(ClassifierEval(surrogate),
                                       data.motions[i], y, ac));
              break;
            case AttackMethod::tasar:
              crafted.push_back(tasar_attack(surrogate, heads.at(s.name),
                                             data.motions[i], y, ac));
              break;
          }
        }

        std::vector<CraftRecord>& records = tm.crafts[{a.name, s.name, seed}];
        for (int i = 0; i < n; ++i) {
          const AdvResult& r = crafted[i];
          records.push_back({i, r.true_label, r.target_label,
                             r.clean_prediction, r.final_prediction,
                             r.linf_distance, r.success});
        }

        std::vector<double> transfer_asr;
        for (const auto& t : cfg.targets) {
          const Classifier& target = models.at(t.name);
          std::vector<AdvResult> evaluated = crafted;
          CellResult cell;
          cell.white_box = detail::same_file(t.checkpoint, s.checkpoint);
          for (int i = 0; i < n; ++i) {
            evaluated[i].clean_prediction = clean_pred.at(t.name)[i];
            evaluated[i].final_prediction = target.predict(crafted[i].adversarial);
            cell.samples.push_back({i, evaluated[i].true_label,
                                    evaluated[i].target_label,
                                    evaluated[i].clean_prediction,
                                    evaluated[i].final_prediction});
          }
          cell.asr = attack_success_rate(evaluated, cfg.targeted, cfg.basis);
          cell.n = n;
          if (cfg.basis == SuccessBasis::originally_correct) {
            cell.n = 0;
            for (const auto& o : cell.samples)
              if (o.clean_prediction == o.true_label) ++cell.n;
          }
          if (!cell.white_box) transfer_asr.push_back(cell.asr);
          tm.cells[{a.name, s.name, t.name, seed}] = std::move(cell);
        }
        if (!transfer_asr.empty()) {
          double sum = 0.0;
          for (double v : transfer_asr) sum += v;
          tm.seed_averages[{a.name, s.name, seed}] = sum / transfer_asr.size();
        }
      }
    }

  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (const auto& [key, ave] : tm.seed_averages) {
    auto& slot = acc[{std::get<0>(key), std::get<1>(key)}];
    slot.first += ave;
    slot.second += 1;
  }
  for (const auto& [key, slot] : acc)
    tm.averages[key] = slot.first / slot.second;
  return tm;
}

// ---------------------------------------------------------------------------
// Config (de)serialization.

inline json BenchConfig::to_json() const {
  json attacks_j = json::array();
  for (const auto& a : attacks) {
    const AttackConfig& c = a.config;
    attacks_j.push_back(
        {{"name", a.name},
         {"method", method_name(a.method)},
         {"epsilon", c.epsilon},
         {"alpha", c.alpha()},
         {"iterations", c.iterations},
         {"momentum_mu", c.momentum_mu},
         {"weights", {c.weights.w0, c.weights.w1, c.weights.w2}},
         {"M", c.M},
         {"sigma", c.sigma},
         {"xi", c.xi},
         {"refit_interval", c.refit_interval},
         {"freeze_noise", c.freeze_noise}});
  }
  auto models_j = [](const std::vector<ModelRef>& v) {
    json out = json::array();
    for (const auto& m : v) {
      json e{{"name", m.name}, {"checkpoint", m.checkpoint}};
      if (!m.heads.empty()) e["heads"] = m.heads;
      out.push_back(e);
    }
    return out;
  };
  json seeds_j = json::array();
  for (auto s : seeds) seeds_j.push_back(s);
  return json{{"data", data},
              {"surrogates", models_j(surrogates)},
              {"targets", models_j(targets)},
              {"attacks", attacks_j},
              {"sample_limit", sample_limit},
              {"seeds", seeds_j},
              {"success_basis", basis_name(basis)},
              {"targeted", targeted}};
}

inline BenchConfig BenchConfig::from_json(const json& j,
                                          const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base_dir / fp).string();
  };
  BenchConfig cfg;
  cfg.data = resolve(j.at("data").get<std::string>());
  auto read_models = [&](const json& arr) {
    std::vector<ModelRef> out;
    for (const auto& e : arr) {
      ModelRef m;
      m.name = e.at("name").get<std::string>();
      m.checkpoint = resolve(e.at("checkpoint").get<std::string>());
      if (e.contains("heads")) m.heads = resolve(e["heads"].get<std::string>());
      out.push_back(std::move(m));
    }
    return out;
  };
  cfg.surrogates = read_models(j.at("surrogates"));
  cfg.targets = read_models(j.at("targets"));
  for (const auto& e : j.at("attacks")) {
    AttackSpec a;
    a.method = method_from_name(e.at("method").get<std::string>());
    a.name = e.value("name", method_name(a.method));
    AttackConfig& c = a.config;
    c.epsilon = e.value("epsilon", c.epsilon);
    if (e.contains("alpha")) c.step_alpha = e["alpha"].get<double>();
    c.iterations = e.value("iterations", c.iterations);
    c.momentum_mu = e.value("momentum_mu", c.momentum_mu);
    if (e.contains("weights")) {
      const auto& w = e["weights"];
      c.weights = DynWeights{w.at(0).get<double>(), w.at(1).get<double>(),
                             w.at(2).get<double>()};
    }
    c.M = e.value("M", c.M);
    c.sigma = e.value("sigma", c.sigma);
    c.xi = e.value("xi", c.xi);
    c.refit_interval = e.value("refit_interval", c.refit_interval);
    c.freeze_noise = e.value("freeze_noise", c.freeze_noise);
    c.validate();
    cfg.attacks.push_back(std::move(a));
  }
  if (j.contains("sample_limit")) cfg.sample_limit = j["sample_limit"].get<int>();
  if (j.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : j["seeds"]) cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  if (j.contains("success_basis"))
    cfg.basis = basis_from_name(j["success_basis"].get<std::string>());
  cfg.targeted = j.value("targeted", false);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Reports.

inline json matrix_to_json(const TransferMatrix& tm) {
  json cells = json::array();
  for (const auto& [key, cell] : tm.cells) {
    json samples = json::array();
    for (const auto& o : cell.samples)
      samples.push_back({o.index, o.true_label, o.target_label,
                         o.clean_prediction, o.adv_prediction});
    cells.push_back({{"attack", std::get<0>(key)},
                     {"surrogate", std::get<1>(key)},
                     {"target", std::get<2>(key)},
                     {"seed", std::get<3>(key)},
                     {"asr", cell.asr},
                     {"n", cell.n},
                     {"white_box", cell.white_box},
                     {"samples", samples}});
  }
  json crafts = json::array();
  for (const auto& [key, records] : tm.crafts) {
    json rows = json::array();
    for (const auto& r : records)
      rows.push_back({r.index, r.true_label, r.target_label, r.clean_prediction,
                      r.final_prediction, r.linf, r.success ? 1 : 0});
    crafts.push_back({{"attack", std::get<0>(key)},
                      {"surrogate", std::get<1>(key)},
                      {"seed", std::get<2>(key)},
                      {"records", rows}});
  }
  json seed_aves = json::array();
  for (const auto& [key, v] : tm.seed_averages)
    seed_aves.push_back({{"attack", std::get<0>(key)},
                         {"surrogate", std::get<1>(key)},
                         {"seed", std::get<2>(key)},
                         {"ave", v}});
  json aves = json::array();
  for (const auto& [key, v] : tm.averages)
    aves.push_back({{"attack", key.first}, {"surrogate", key.second}, {"ave", v}});
  return json{{"version", tm.version}, {"config", tm.config},
              {"cells", cells},        {"crafts", crafts},
              {"seed_averages", seed_aves}, {"averages", aves}};
}

inline TransferMatrix matrix_from_json(const json& j) {
  TransferMatrix tm;
  tm.version = j.at("version").get<std::string>();
  tm.config = j.at("config");
  for (const auto& c : j.at("cells")) {
    CellResult cell;
    cell.asr = c.at("asr").get<double>();
    cell.n = c.at("n").get<int>();
    cell.white_box = c.at("white_box").get<bool>();
    for (const auto& s : c.at("samples"))
      cell.samples.push_back({s.at(0).get<int>(), s.at(1).get<int>(),
                              s.at(2).get<int>(), s.at(3).get<int>(),
                              s.at(4).get<int>()});
    tm.cells[{c.at("attack").get<std::string>(),
              c.at("surrogate").get<std::string>(),
              c.at("target").get<std::string>(),
              c.at("seed").get<std::uint64_t>()}] = std::move(cell);
  }
  for (const auto& c : j.at("crafts")) {
    std::vector<CraftRecord> records;
    for (const auto& r : c.at("records"))
      records.push_back({r.at(0).get<int>(), r.at(1).get<int>(),
                         r.at(2).get<int>(), r.at(3).get<int>(),
                         r.at(4).get<int>(), r.at(5).get<double>(),
                         r.at(6).get<int>() != 0});
    tm.crafts[{c.at("attack").get<std::string>(),
               c.at("surrogate").get<std::string>(),
               c.at("seed").get<std::uint64_t>()}] = std::move(records);
  }
  for (const auto& a : j.at("seed_averages"))
    tm.seed_averages[{a.at("attack").get<std::string>(),
                      a.at("surrogate").get<std::string>(),
                      a.at("seed").get<std::uint64_t>()}] =
        a.at("ave").get<double>();
  for (const auto& a : j.at("averages"))
    tm.averages[{a.at("attack").get<std::string>(),
                 a.at("surrogate").get<std::string>()}] = a.at("ave").get<double>();
  return tm;
}

inline std::string render_csv(const TransferMatrix& tm) {
  std::ostringstream out;
  out << "attack,surrogate,target,seed,asr,n,white_box\n";
  char buf[64];
  for (const auto& [key, cell] : tm.cells) {
    std::snprintf(buf, sizeof buf, "%.6f", cell.asr);
    out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key)
        << ',' << std::get<3>(key) << ',' << buf << ',' << cell.n << ','
        << (cell.white_box ? 1 : 0) << '\n';
  }
  return out.str();
}

// Plain-text table: one block per surrogate, attacks as rows, targets as
// columns (white-box diagonal starred), trailing transfer average.  Cell
// values are means over seeds.
inline std::string render_table(const TransferMatrix& tm) {
  std::vector<std::string> attacks, surrogates, targets;
  for (const auto& [key, cell] : tm.cells) {
    (void)cell;
    auto push_unique = [](std::vector<std::string>& v, const std::string& s) {
      if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    push_unique(attacks, std::get<0>(key));
    push_unique(surrogates, std::get<1>(key));
    push_unique(targets, std::get<2>(key));
  }
  auto mean_cell = [&](const std::string& a, const std::string& s,
                       const std::string& t, bool* white) {
    double sum = 0.0;
    int cnt = 0;
    for (const auto& [key, cell] : tm.cells)
      if (std::get<0>(key) == a && std::get<1>(key) == s && std::get<2>(key) == t) {
        sum += cell.asr;
        ++cnt;
        *white = cell.white_box;
      }
    return cnt ? sum / cnt : 0.0;
  };
  std::ostringstream out;
  char buf[64];
  const std::string basis = tm.config.value("success_basis", "all_samples");
  const bool targeted = tm.config.value("targeted", false);
  out << "Attack success rate (%), mean over seeds; "
      << (targeted ? "targeted" : "untargeted") << ", basis=" << basis << "\n"
      << "(* = white-box surrogate-as-target cell, excluded from Ave)\n\n";
  for (const auto& s : surrogates) {
    out << "Surrogate: " << s << "\n";
    out << "  " << std::string(12, ' ');
    for (const auto& t : targets) {
      std::snprintf(buf, sizeof buf, "%14s", t.c_str());
      out << buf;
    }
    out << "            Ave\n";
    for (const auto& a : attacks) {
      std::snprintf(buf, sizeof buf, "  %-12s", a.c_str());
      out << buf;
      for (const auto& t : targets) {
        bool white = false;
        double v = mean_cell(a, s, t, &white);
        std::snprintf(buf, sizeof buf, "%12.2f%s", v, white ? " *" : "  ");
        out << buf;
      }
      auto it = tm.averages.find({a, s});
      if (it != tm.averages.end()) {
        std::snprintf(buf, sizeof buf, "%14.2f", it->second);
        out << buf;
      } else {
        out << std::string(14, ' ');
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

inline void export_report(const TransferMatrix& tm,
                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  save_json(out_dir / "results.json", matrix_to_json(tm));
  std::ofstream csv(out_dir / "results.csv", std::ios::trunc);
  csv << render_csv(tm);
  std::ofstream txt(out_dir / "results.txt", std::ios::trunc);
  txt << render_table(tm);
  if (!csv || !txt)
    throw std::runtime_error("export_report: write failed in " + out_dir.string());
}

inline TransferMatrix import_report(const std::filesystem::path& json_path) {
  return matrix_from_json(load_json(json_path));
}

}  // namespace tasar

#endif  // TASAR_BENCH_HPP
