#include "lineage/matcher/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <random>
#include <set>

#include "lineage/errors.hpp"
#include "lineage/util/parallel.hpp"
#include "lineage/util/seed.hpp"

namespace lineage::matcher {
namespace {

constexpr std::uint64_t kSplitTag = 0x5a5a;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Scorer metric_scorer(const similarity::MetricSpec& metric, bool approx) {
  return [metric, approx](const zoo::ModelRecord& child, const std::vector<const zoo::ModelRecord*>& cands,
                          const nn::Tensor& inputs, const std::string& tap) {
    std::vector<similarity::LinearizedScore> out;
    out.reserve(cands.size());
    const similarity::ModelRef c{child.arch, child.params};
    if (!approx) {
      const nn::Tensor y = nn::features_at(child.arch, child.params, inputs, tap);
      for (const auto* p : cands) {
        const nn::Tensor x = nn::features_at(p->arch, p->params, inputs, tap);
        out.push_back({similarity::baseline_similarity(metric, x, y), 0.0});
      }
      return out;
    }
    for (const auto* p : cands) out.push_back(similarity::linearized_score(metric, {p->arch, p->params}, c, inputs, tap));
    return out;
  };
}

// Probe batches are shared by every child of a task.
class ProbeCache {
 public:
  ProbeCache(const zoo::Zoo& zoo, std::size_t samples, std::uint64_t seed) : zoo_(zoo), samples_(samples), seed_(seed) {}

  const nn::Tensor& get(const std::string& task) {
    std::lock_guard lock(mu_);
    auto it = cache_.find(task);
    if (it == cache_.end()) it = cache_.emplace(task, zoo::probe_batch(zoo_.task(task), samples_, seed_)).first;
    return it->second;
  }

 private:
  const zoo::Zoo& zoo_;
  std::size_t samples_;
  std::uint64_t seed_;
  std::mutex mu_;
  std::map<std::string, nn::Tensor> cache_;
};

}  // namespace

Method Method::parse(const std::string& text) {
  Method m;
  m.id = text;
  std::string base = text;
  const std::string suffix = "+approx";
  if (base.size() > suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    m.approx = true;
    base.resize(base.size() - suffix.size());
  }
  m.metric = similarity::MetricSpec::parse(base);
  if (m.approx && !m.metric.has_linearization()) throw ConfigError(base + " has no approximated form");
  return m;
}

Method Method::random(std::uint64_t seed) {
  Method m;
  m.id = "random";
  m.scorer = [seed](const zoo::ModelRecord& child, const std::vector<const zoo::ModelRecord*>& cands,
                    const nn::Tensor&, const std::string&) {
    std::mt19937_64 rng(derive_seed({seed, fnv1a(child.id)}));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<similarity::LinearizedScore> out;
    for (std::size_t i = 0; i < cands.size(); ++i) out.push_back({u(rng), 0.0});
    return out;
  };
  return m;
}

std::size_t EvalReport::test_count() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += !p.validation;
  return n;
}

nlohmann::json EvalReport::summary() const {
  return {{"method", method},       {"accuracy", accuracy}, {"alpha", alpha},         {"tap", tap},
          {"candidates", candidates}, {"filtered", filtered}, {"excluded", excluded}, {"evaluated", evaluated},
          {"test_pairs", test_count()}, {"ties", ties},       {"degenerate", degenerate}};
}

std::string EvalReport::to_csv() const {
  std::string out = "method,child_id,true_parent,predicted_parent,correct,split,gap,lr,iterations,p_true\n";
  for (const auto& p : pairs) {
    out += method + "," + p.child_id + "," + p.true_parent + "," + p.predicted_parent + "," + (p.correct ? "1" : "0") +
           "," + (p.validation ? "validation" : "test") + "," + std::to_string(p.gap) + "," + num(p.lr) + "," +
           std::to_string(p.iterations) + "," + num(p.p_true) + "\n";
  }
  return out;
}

EvalReport evaluate_zoo(const zoo::Zoo& zoo, const Method& method, const PairFilter& filter, const EvalOptions& opts) {
  const auto candidates = zoo.parents_of_generation(opts.ancestor_generation);
  if (candidates.empty())
    throw ConfigError("no candidate parents at generation " + std::to_string(opts.ancestor_generation));
  if (method.taps.empty()) throw ConfigError("method '" + method.id + "' has no tap");
  if (method.approx && method.alphas.empty()) throw ConfigError("method '" + method.id + "' has no alpha");

  EvalReport rep;
  rep.method = method.id;
  rep.candidates = candidates.size();
  rep.degenerate = candidates.size() == 1;

  struct Job {
    const zoo::ModelRecord* child;
    std::size_t truth;
  };
  std::vector<Job> jobs;
  for (const auto& r : zoo.records) {
    if (r.generation <= opts.ancestor_generation) continue;
    if (filter.generation && r.generation != *filter.generation) continue;
    if (filter.keep && !filter.keep(r)) continue;
    ++rep.filtered;
    const zoo::ModelRecord* anc = zoo.ancestor(r, opts.ancestor_generation);
    auto it = std::find(candidates.begin(), candidates.end(), anc);
    if (anc == nullptr || it == candidates.end()) {
      ++rep.excluded;
      continue;
    }
    jobs.push_back({&r, static_cast<std::size_t>(it - candidates.begin())});
  }
  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.child->id < b.child->id; });
  rep.evaluated = jobs.size();
  if (jobs.empty()) return rep;

  // Validation membership is fixed by the zoo seed so every fold and method
  // sees the same split.
  std::vector<std::size_t> perm(jobs.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 split_rng(derive_seed({zoo.seed, kSplitTag, static_cast<std::uint64_t>(opts.ancestor_generation)}));
  std::shuffle(perm.begin(), perm.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(std::llround(opts.validation_fraction * static_cast<double>(jobs.size())));
  std::vector<bool> is_val(jobs.size(), false);
  for (std::size_t i = 0; i < std::min(n_val, jobs.size()); ++i) is_val[perm[i]] = true;

  const Scorer scorer = method.scorer ? method.scorer : metric_scorer(method.metric, method.approx);
  ProbeCache probes(zoo, opts.samples, opts.input_seed);
  // scores[job][tap] = per-candidate first-order scores
  std::vector<std::vector<std::vector<similarity::LinearizedScore>>> scores(jobs.size());
  parallel_for(jobs.size(), opts.workers, [&](std::size_t j) {
    const nn::Tensor& inputs = probes.get(jobs[j].child->task);
    for (const auto& tap : method.taps) scores[j].push_back(scorer(*jobs[j].child, candidates, inputs, tap));
  });

  std::vector<double> alphas = method.approx ? method.alphas : std::vector<double>{0.0};
  std::sort(alphas.begin(), alphas.end());
  auto predict = [&](std::size_t j, std::size_t tap, double alpha) {
    std::vector<double> s;
    for (const auto& ls : scores[j][tap]) s.push_back(ls.at(alpha));
    return match(s);
  };

  std::size_t best_tap = 0;
  double best_alpha = alphas.front();
  if (n_val > 0) {
    std::size_t best_hits = 0;
    bool first = true;
    for (std::size_t t = 0; t < method.taps.size(); ++t) {
      for (double a : alphas) {
        std::size_t hits = 0;
        for (std::size_t j = 0; j < jobs.size(); ++j)
          if (is_val[j]) hits += predict(j, t, a).predicted == jobs[j].truth;
        if (first || hits > best_hits) {
          best_hits = hits;
          best_tap = t;
          best_alpha = a;
          first = false;
        }
      }
    }
  }
  rep.alpha = method.approx ? best_alpha : 0.0;
  rep.tap = method.taps[best_tap];

  std::size_t hits = 0, tests = 0;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto d = predict(j, best_tap, best_alpha);
    PairRecord p;
    p.child_id = jobs[j].child->id;
    p.true_parent = candidates[jobs[j].truth]->id;
    p.predicted_parent = candidates[d.predicted]->id;
    p.correct = d.predicted == jobs[j].truth;
    p.validation = is_val[j];
    p.probs = d.probs;
    p.p_true = d.probs[jobs[j].truth];
    p.gap = jobs[j].child->generation - opts.ancestor_generation;
    p.lr = jobs[j].child->tuning.lr;
    p.iterations = jobs[j].child->tuning.iterations;
    rep.ties += d.tied;
    if (!p.validation) {
      ++tests;
      hits += p.correct;
    }
    rep.pairs.push_back(std::move(p));
  }
  rep.accuracy = tests ? static_cast<double>(hits) / static_cast<double>(tests) : 0.0;
  return rep;
}

nlohmann::json FoldSummary::to_json() const {
  nlohmann::json accs = nlohmann::json::array();
  for (const auto& f : folds) accs.push_back(f.accuracy);
  return {{"method", method}, {"mean", mean}, {"std", stddev}, {"folds", accs}};
}

FoldSummary evaluate_folds(const zoo::Zoo& zoo, const Method& method, const PairFilter& filter, const EvalOptions& opts,
                           std::size_t folds) {
  if (folds == 0) throw ConfigError("need at least one fold");
  FoldSummary s;
  s.method = method.id;
  for (std::size_t f = 0; f < folds; ++f) {
    EvalOptions o = opts;
    o.input_seed = opts.input_seed + f;
    s.folds.push_back(evaluate_zoo(zoo, method, filter, o));
  }
  for (const auto& f : s.folds) s.mean += f.accuracy;
  s.mean /= static_cast<double>(folds);
  for (const auto& f : s.folds) s.stddev += (f.accuracy - s.mean) * (f.accuracy - s.mean);
  s.stddev = folds > 1 ? std::sqrt(s.stddev / static_cast<double>(folds - 1)) : 0.0;
  return s;
}

std::map<std::pair<int, int>, EvalReport> generation_gap_matrix(const zoo::Zoo& zoo, const Method& method,
                                                                const EvalOptions& opts) {
  std::map<std::pair<int, int>, EvalReport> out;
  const int top = zoo.max_generation();
  for (int a = 1; a < top; ++a) {
    for (int d = a + 1; d <= top; ++d) {
      EvalOptions o = opts;
      o.ancestor_generation = a;
      PairFilter f;
      f.generation = d;
      out.emplace(std::make_pair(a, d), evaluate_zoo(zoo, method, f, o));
    }
  }
  return out;
}

std::vector<SweepPoint> sweep(const zoo::Zoo& zoo, SweepAxis axis, const std::vector<Method>& methods,
                              const EvalOptions& opts, std::vector<double> values) {
  auto value_of = [axis](const zoo::ModelRecord& r) {
    return axis == SweepAxis::learning_rate ? r.tuning.lr : static_cast<double>(r.tuning.iterations);
  };
  std::set<double> present;
  for (const auto& r : zoo.records)
    if (r.generation > opts.ancestor_generation) present.insert(value_of(r));
  if (values.empty()) values.assign(present.begin(), present.end());
  for (double v : values)
    if (!present.count(v)) throw ConfigError("sweep value " + num(v) + " does not occur in the zoo metadata");

  std::vector<SweepPoint> out;
  for (const auto& m : methods) {
    for (double v : values) {
      PairFilter f;
      f.keep = [v, value_of](const zoo::ModelRecord& r) { return value_of(r) == v; };
      out.push_back({v, evaluate_zoo(zoo, m, f, opts)});
    }
  }
  return out;
}

}  // namespace lineage::matcher
