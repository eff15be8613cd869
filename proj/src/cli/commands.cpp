#include "lineage/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lineage/detector/serialize.hpp"
#include "lineage/detector/train.hpp"
#include "lineage/errors.hpp"
#include "lineage/matcher/evaluate.hpp"
#include "lineage/similarity/report.hpp"
#include "lineage/util/parallel.hpp"
#include "lineage/util/seed.hpp"

namespace lineage::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kEvalTag = 0xe7a1, kSplitTag = 0x5911, kDetectorTag = 0xde7e;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
  if (!f) throw Error("short write to " + path.string());
}

void prepare_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("no output directory given (--out)");
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out)) throw ConfigError("cannot create output directory " + cfg.out);
}

void write_resolved(const RunConfig& cfg) { write_text(fs::path(cfg.out) / "config.json", to_json(cfg).dump(2) + "\n"); }

zoo::Zoo open_zoo(const RunConfig& cfg) {
  if (cfg.zoo.path.empty()) throw ConfigError("no zoo path given (zoo.path)");
  if (!fs::exists(fs::path(cfg.zoo.path) / "manifest.json")) throw ConfigError("no zoo manifest under " + cfg.zoo.path);
  return zoo::load_zoo(cfg.zoo.path);
}

std::uint64_t eval_seed(const RunConfig& cfg) { return derive_seed({cfg.seed, kEvalTag}); }

std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

matcher::Method make_method(const std::string& text, const RunConfig& cfg) {
  matcher::Method m = text == "random" ? matcher::Method::random(derive_seed({cfg.seed, 0x4a4d})) : matcher::Method::parse(text);
  m.alphas = cfg.eval.alphas;
  m.taps = cfg.eval.taps;
  return m;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

int cmd_zoo_build(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.zoo.tasks.empty()) throw ConfigError("zoo.tasks is empty");
  if (cfg.out.empty()) throw ConfigError("no output directory given (--out)");
  const fs::path dir = cfg.out;
  if (fs::exists(dir / "manifest.json")) throw ConfigError(dir.string() + " already holds a zoo; refusing to modify it");
  const bool existed = fs::exists(dir);
  prepare_out(cfg);
  try {
    // Fail before training if the directory is not writable.
    write_text(dir / ".probe", "");
    fs::remove(dir / ".probe");

    std::vector<zoo::TaskSpec> tasks = cfg.zoo.tasks;
    if (tasks.size() == 1) tasks.push_back(tasks[0]);  // one task: children fine-tune on it again
    std::vector<zoo::HyperGrid> grids = cfg.zoo.child_grids;
    if (grids.empty()) grids.emplace_back();
    if (grids.size() != 1 && grids.size() != tasks.size() - 1)
      throw ConfigError("zoo.child_grids needs one grid or one per fine-tuning task");
    zoo::BuildOptions opts;
    opts.seed = cfg.seed;
    opts.accuracy_floor = cfg.zoo.accuracy_floor;
    opts.workers = cfg.workers;
    opts.hidden = cfg.zoo.hidden;
    opts.activation = cfg.zoo.activation;
    opts.shared_parent_init = cfg.zoo.shared_init;
    const zoo::Zoo z = zoo::build_generations(tasks, cfg.zoo.parent_grid, cfg.zoo.parents, grids, opts);
    zoo::save_zoo(z, dir);
    RunConfig resolved = cfg;
    resolved.zoo.path = cfg.out;
    write_resolved(resolved);
    out << "wrote " << z.records.size() << " models in " << z.max_generation() << " generations to "
        << (dir / "manifest.json").string() << "\n";
    if (!z.warnings.empty()) {
      for (const auto& w : z.warnings) err << "warning: " << w << "\n";
      return kExitWarnings;
    }
    return kExitOk;
  } catch (...) {
    // Leave nothing behind on failure.
    std::error_code ec;
    if (!existed) fs::remove_all(dir, ec);
    else {
      fs::remove(dir / "manifest.json", ec);
      fs::remove_all(dir / "blobs", ec);
    }
    throw;
  }
}

int cmd_detect(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const zoo::Zoo z = open_zoo(cfg);
  const auto* child = z.find(cfg.detect.child);
  if (!child) {
    std::string hint;
    for (std::size_t i = 0; i < z.records.size() && i < 12; ++i) hint += (i ? ", " : "") + z.records[i].id;
    if (z.records.size() > 12) hint += ", ...";
    throw ConfigError("unknown child id '" + cfg.detect.child + "'; known ids: " + hint);
  }
  std::vector<const zoo::ModelRecord*> cands;
  if (!cfg.detect.candidates.empty()) {
    for (const auto& id : cfg.detect.candidates) {
      const auto* r = z.find(id);
      if (!r) throw ConfigError("unknown candidate id '" + id + "'");
      cands.push_back(r);
    }
  } else {
    const int g = cfg.detect.ancestor_generation.value_or(child->generation - 1);
    if (g < 1) throw ConfigError("'" + child->id + "' is a root model; name candidates explicitly");
    cands = z.parents_of_generation(g);
    if (cands.empty()) throw ConfigError("no candidates at generation " + std::to_string(g));
  }

  const matcher::Method method = matcher::Method::parse(cfg.detect.method);
  const nn::Tensor inputs = zoo::probe_batch(z.task(child->task), cfg.detect.samples, eval_seed(cfg));
  const similarity::ModelRef c{child->arch, child->params};
  similarity::SimilarityReport rep;
  rep.child_id = child->id;
  std::vector<double> scores;
  std::vector<std::string> ids;
  for (const auto* p : cands) {
    const similarity::ModelRef pr{p->arch, p->params};
    similarity::SimilarityRow row;
    row.parent_id = p->id;
    row.metric = method.id;
    row.tap = cfg.detect.tap;
    if (method.approx) {
      const auto ls = similarity::linearized_score(method.metric, pr, c, inputs, cfg.detect.tap);
      row.alpha = cfg.detect.alpha;
      row.baseline = ls.baseline;
      row.approx = ls.at(cfg.detect.alpha);
    } else {
      row.baseline = similarity::baseline_similarity(method.metric, nn::features_at(p->arch, p->params, inputs, cfg.detect.tap),
                                                     nn::features_at(child->arch, child->params, inputs, cfg.detect.tap));
      row.approx = row.baseline;
    }
    if (cfg.detect.oracle && method.metric.has_linearization()) {
      try {
        row.oracle = similarity::oracle_similarity(method.metric, pr, c, inputs, cfg.detect.tap, row.alpha,
                                                   cfg.detect.oracle_budget);
      } catch (const BudgetError&) {
      }
    }
    scores.push_back(method.approx ? row.approx : row.baseline);
    ids.push_back(p->id);
    rep.rows.push_back(row);
  }
  const auto dist = matcher::match(scores, ids);
  for (std::size_t i = 0; i < rep.rows.size(); ++i) rep.rows[i].probability = dist.probs[i];

  std::vector<std::size_t> rank(ids.size());
  for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
  std::stable_sort(rank.begin(), rank.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  json ranking = json::array();
  out << "child " << child->id << " (" << method.id << ", tap " << cfg.detect.tap << ")\n";
  for (std::size_t k = 0; k < rank.size(); ++k) {
    const auto i = rank[k];
    char line[160];
    std::snprintf(line, sizeof line, "%2zu  %-24s P=%.6f  score=%.10g\n", k + 1, ids[i].c_str(), dist.probs[i], scores[i]);
    out << line;
    ranking.push_back({{"parent_id", ids[i]}, {"score", scores[i]}, {"probability", dist.probs[i]}});
  }
  if (!cfg.out.empty()) {
    prepare_out(cfg);
    json j = {{"child_id", child->id},
              {"predicted", ids[dist.predicted]},
              {"tied", dist.tied},
              {"ranking", ranking},
              {"similarity", rep.to_json()}};
    write_text(fs::path(cfg.out) / "detect.json", j.dump(2) + "\n");
    write_text(fs::path(cfg.out) / "similarity.csv", rep.to_csv());
    write_resolved(cfg);
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.eval.methods.empty()) throw ConfigError("nothing to evaluate: eval.methods is empty");
  std::vector<matcher::Method> methods;
  for (const auto& m : cfg.eval.methods) methods.push_back(make_method(m, cfg));
  const zoo::Zoo z = open_zoo(cfg);
  prepare_out(cfg);
  const fs::path dir = cfg.out;

  matcher::EvalOptions opts;
  opts.ancestor_generation = cfg.eval.ancestor_generation;
  opts.samples = cfg.eval.samples;
  opts.input_seed = eval_seed(cfg);
  opts.validation_fraction = cfg.eval.validation_fraction;
  opts.workers = cfg.workers;

  json summary = json::array();
  std::string summary_csv = "method,mean_accuracy,std_accuracy,folds,alpha,tap,test_pairs,excluded\n";
  for (const auto& m : methods) {
    const auto fs_ = matcher::evaluate_folds(z, m, {}, opts, std::max<std::size_t>(1, cfg.eval.folds));
    json row = fs_.to_json();
    row["first_fold"] = fs_.folds[0].summary();
    summary.push_back(row);
    const auto& f0 = fs_.folds[0];
    summary_csv += m.id + "," + num(fs_.mean) + "," + num(fs_.stddev) + "," + std::to_string(fs_.folds.size()) + "," +
                   num(f0.alpha) + "," + f0.tap + "," + std::to_string(f0.test_count()) + "," +
                   std::to_string(f0.excluded) + "\n";
    for (std::size_t k = 0; k < fs_.folds.size(); ++k) {
      const std::string name = "pairs_" + file_safe(m.id) + (fs_.folds.size() > 1 ? "_fold" + std::to_string(k) : "") + ".csv";
      write_text(dir / name, fs_.folds[k].to_csv());
    }
    out << m.id << ": accuracy " << num(fs_.mean) << " over " << f0.test_count() << " test children\n";
  }

  json result = {{"methods", summary}};
  if (cfg.eval.gap_matrix) {
    std::string csv = "method,ancestor_generation,descendant_generation,gap,accuracy,test_pairs\n";
    for (const auto& m : methods) {
      for (const auto& [key, rep] : matcher::generation_gap_matrix(z, m, opts)) {
        csv += m.id + "," + std::to_string(key.first) + "," + std::to_string(key.second) + "," +
               std::to_string(key.second - key.first) + "," + num(rep.accuracy) + "," + std::to_string(rep.test_count()) + "\n";
      }
    }
    write_text(dir / "gap_matrix.csv", csv);
  }

  if (cfg.eval.scatter) {
    std::string csv = "method,child_id,parent_id,tap,alpha,baseline,approx,oracle\n";
    json pearsons = json::object();
    const std::string tap = cfg.eval.taps.front();
    const auto cands = z.parents_of_generation(cfg.eval.ancestor_generation);
    std::vector<std::pair<const zoo::ModelRecord*, const zoo::ModelRecord*>> pairs;
    for (const auto& r : z.records) {
      if (r.generation <= cfg.eval.ancestor_generation) continue;
      for (const auto* p : cands) {
        if (pairs.size() < cfg.eval.scatter_pairs) pairs.emplace_back(&r, p);
      }
    }
    for (const auto& m : methods) {
      if (!m.approx) continue;
      struct Cell {
        double baseline = 0, approx = 0;
        std::optional<double> oracle;
      };
      std::vector<Cell> cells(pairs.size());
      parallel_for(pairs.size(), cfg.workers, [&](std::size_t i) {
        const auto& [c, p] = pairs[i];
        const nn::Tensor inputs = zoo::probe_batch(z.task(c->task), cfg.eval.samples, opts.input_seed);
        const similarity::ModelRef pr{p->arch, p->params}, cr{c->arch, c->params};
        const auto ls = similarity::linearized_score(m.metric, pr, cr, inputs, tap);
        cells[i].baseline = ls.baseline;
        cells[i].approx = ls.at(cfg.eval.scatter_alpha);
        try {
          cells[i].oracle = similarity::oracle_similarity(m.metric, pr, cr, inputs, tap, cfg.eval.scatter_alpha,
                                                          cfg.eval.oracle_budget);
        } catch (const BudgetError&) {
        }
      });
      std::vector<double> xs, ys;
      bool missing = false;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        csv += m.id + "," + pairs[i].first->id + "," + pairs[i].second->id + "," + tap + "," + num(cfg.eval.scatter_alpha) +
               "," + num(cells[i].baseline) + "," + num(cells[i].approx) + "," +
               (cells[i].oracle ? num(*cells[i].oracle) : std::string("n/a")) + "\n";
        if (cells[i].oracle) {
          xs.push_back(*cells[i].oracle);
          ys.push_back(cells[i].approx);
        } else {
          missing = true;
        }
      }
      if (missing) err << "warning: oracle over budget for some " << m.id << " pairs; marked n/a\n";
      pearsons[m.id] = xs.size() > 1 ? json(pearson(xs, ys)) : json("n/a");
    }
    write_text(dir / "scatter.csv", csv);
    result["scatter_pearson"] = pearsons;
  }

  write_text(dir / "summary.json", result.dump(2) + "\n");
  write_text(dir / "summary.csv", summary_csv);
  write_resolved(cfg);
  return kExitOk;
}

int cmd_train_detector(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const auto& dc = cfg.detector;
  if (dc.withhold_parent && !dc.model.no_parent)
    throw ConfigError("withholding a parent needs no-parent mode (--no-parent)");
  const zoo::Zoo z = open_zoo(cfg);
  prepare_out(cfg);
  const fs::path dir = cfg.out;

  detector::DatasetOptions dopts;
  dopts.ancestor_generation = dc.ancestor_generation;
  dopts.descendant_generation = dc.descendant_generation;
  dopts.withhold_parent = dc.withhold_parent;
  dopts.use_weights = dc.model.use_weights;
  dopts.use_features = dc.model.use_features;
  dopts.input_seed = eval_seed(cfg);
  dopts.workers = cfg.workers;
  const auto data = detector::build_dataset(z, dc.planes, dopts);
  const auto split = detector::split_dataset(data.samples.size(), derive_seed({cfg.seed, kSplitTag}));

  detector::TrainOptions topts;
  topts.epochs = dc.epochs;
  topts.lr = dc.lr;
  topts.seed = derive_seed({cfg.seed, kDetectorTag});
  topts.workers = cfg.workers;
  topts.shuffle_labels = dc.shuffle_labels;
  topts.checkpoint = dir / "checkpoint.bin";
  topts.resume = dc.resume;
  const auto res = detector::train_detector(dc.model, data, split, topts);
  const auto test = detector::evaluate_split(dc.model, res.params, data, split.test, cfg.workers);

  detector::save_detector(dir / "detector.bin", dc.model, res.params,
                          {{"best_epoch", res.best_epoch}, {"planes", dc.planes}, {"candidates", data.candidate_ids}});
  write_text(dir / "log.csv", detector::log_csv(res.log));
  std::string pairs = "child_id,true_parent,predicted_parent,correct\n";
  auto name = [&](std::size_t k) { return k < data.candidate_count() ? data.candidate_ids[k] : std::string("none"); };
  for (std::size_t k = 0; k < split.test.size(); ++k) {
    const auto& s = data.samples[split.test[k]];
    pairs += s.child_id + "," + name(s.label) + "," + name(test.predictions[k]) + "," +
             (s.label == test.predictions[k] ? "1" : "0") + "\n";
  }
  write_text(dir / "test_pairs.csv", pairs);
  json report = {{"method", "detector"},
                 {"accuracy", test.accuracy},
                 {"loss", test.loss},
                 {"test_pairs", test.count},
                 {"train_pairs", split.train.size()},
                 {"validation_pairs", split.validation.size()},
                 {"candidates", data.candidate_ids},
                 {"excluded", data.excluded},
                 {"best_epoch", res.best_epoch},
                 {"best_validation_accuracy", res.best_val_accuracy},
                 {"no_parent_recall", test.no_parent_recall ? json(*test.no_parent_recall) : json(nullptr)}};
  write_text(dir / "report.json", report.dump(2) + "\n");
  write_resolved(cfg);
  out << "detector test accuracy " << num(test.accuracy) << " on " << test.count << " children (best epoch "
      << res.best_epoch << ")\n";
  if (test.no_parent_recall) out << "no-parent recall " << num(*test.no_parent_recall) << "\n";
  return kExitOk;
}

int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    if (cfg.command == "zoo-build") return cmd_zoo_build(cfg, out, err);
    if (cfg.command == "detect") return cmd_detect(cfg, out, err);
    if (cfg.command == "eval") return cmd_eval(cfg, out, err);
    if (cfg.command == "train-detector") return cmd_train_detector(cfg, out, err);
    throw ConfigError("unknown command '" + cfg.command + "'");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parent-model detection for fine-tuned networks"};
  app.require_subcommand(1);
  std::string config_path, out_dir, zoo_path, child, withhold;
  std::uint64_t seed = 0;
  std::size_t workers = 0, epochs = 0;
  std::vector<std::string> methods, taps;
  std::vector<double> alphas;
  bool no_parent = false, resume = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (YAML or JSON)");
    sub->add_option("--seed", seed, "Top-level seed");
    sub->add_option("--workers", workers, "Parallel jobs (default: available cores)");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--zoo", zoo_path, "Zoo directory");
  };
  auto* zb = app.add_subcommand("zoo-build", "Train parents and fine-tuned generations");
  auto* de = app.add_subcommand("detect", "Rank candidate parents for one child");
  auto* ev = app.add_subcommand("eval", "Learning-free accuracy over a zoo");
  auto* tr = app.add_subcommand("train-detector", "Train and test the learned detector");
  for (auto* s : {zb, de, ev, tr}) common(s);
  for (auto* s : {de, ev}) {
    s->add_option("--method", methods, "Method, e.g. l2 or l2+approx");
    s->add_option("--alpha", alphas, "Alpha value(s)");
    s->add_option("--tap", taps, "Feature tap(s)");
  }
  de->add_option("--child", child, "Child model id");
  tr->add_flag("--no-parent", no_parent, "Add the no-parent class");
  tr->add_option("--withhold-parent", withhold, "Remove this parent from the candidates");
  tr->add_option("--epochs", epochs, "Training epochs");
  tr->add_flag("--resume", resume, "Continue from out/checkpoint.bin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? kExitOk : kExitError;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  auto* sub = app.get_subcommands().front();
  auto given = [&](const char* opt) { return sub->count(opt) > 0; };

  try {
    json j = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config " + config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      j = parse_config_text(ss.str());
      if (j.is_null()) j = json::object();
    }
    j["command"] = command;
    if (given("--seed")) j["seed"] = seed;
    j["workers"] = given("--workers") ? workers : (j.contains("workers") ? j["workers"].get<std::size_t>() : default_workers());
    if (given("--out")) j["out"] = out_dir;
    if (given("--zoo")) j["zoo"]["path"] = zoo_path;
    if (command == "detect") {
      if (!methods.empty()) j["detect"]["method"] = methods.front();
      if (!alphas.empty()) j["detect"]["alpha"] = alphas.front();
      if (!taps.empty()) j["detect"]["tap"] = taps.front();
      if (given("--child")) j["detect"]["child"] = child;
    }
    if (command == "eval") {
      if (!methods.empty()) j["eval"]["methods"] = methods;
      if (!alphas.empty()) j["eval"]["alphas"] = alphas;
      if (!taps.empty()) j["eval"]["taps"] = taps;
    }
    if (command == "train-detector") {
      if (no_parent) j["detector"]["model"]["no_parent"] = true;
      if (given("--withhold-parent")) j["detector"]["withhold_parent"] = withhold;
      if (given("--epochs")) j["detector"]["epochs"] = epochs;
      if (resume) j["detector"]["resume"] = true;
    }
    return run_command(config_from_json(j), out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace lineage::cli
