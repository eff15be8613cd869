#include "lineage/detector/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "lineage/detector/serialize.hpp"
#include "lineage/errors.hpp"
#include "lineage/nn/ops.hpp"
#include "lineage/util/parallel.hpp"
#include "lineage/util/seed.hpp"

namespace lineage::detector {
namespace {

constexpr std::uint64_t kInitTag = 1, kOrderTag = 2, kLabelTag = 3;

struct SampleEval {
  double loss = 0.0;
  std::size_t predicted = 0;
};

SampleEval eval_sample(const DetectorConfig& cfg, const nn::ParamVector& params, const DetectorSample& s,
                       std::size_t label) {
  nn::Tape t(params);
  const auto& logits = t.value(candidate_logits(t, cfg, s.candidates));
  const auto z = logits.data();
  const std::size_t best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  const double mx = z[best];
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return {std::log(sum) + mx - z[label], best};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json log_json(const std::vector<LogRow>& log) {
  auto a = nlohmann::json::array();
  for (const auto& r : log) a.push_back({r.epoch, r.train_loss, r.val_loss, r.val_accuracy});
  return a;
}

std::vector<LogRow> log_from_json(const nlohmann::json& a) {
  std::vector<LogRow> out;
  for (const auto& r : a) out.push_back({r[0].get<std::size_t>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()});
  return out;
}

}  // namespace

std::string log_csv(const std::vector<LogRow>& log) {
  std::string out = "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& r : log)
    out += std::to_string(r.epoch) + "," + fmt(r.train_loss) + "," + fmt(r.val_loss) + "," + fmt(r.val_accuracy) + "\n";
  return out;
}

SplitMetrics evaluate_split(const DetectorConfig& cfg, const nn::ParamVector& params, const DetectorDataset& data,
                            const std::vector<std::size_t>& indices, std::size_t workers) {
  std::vector<SampleEval> evals(indices.size());
  parallel_for(indices.size(), workers, [&](std::size_t k) {
    const auto& s = data.samples.at(indices[k]);
    evals[k] = eval_sample(cfg, params, s, s.label);
  });
  SplitMetrics m;
  m.count = indices.size();
  const std::size_t none = data.candidate_count();
  std::size_t hits = 0, np_total = 0, np_hits = 0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto label = data.samples[indices[k]].label;
    m.loss += evals[k].loss;
    hits += evals[k].predicted == label;
    m.predictions.push_back(evals[k].predicted);
    if (label == none) {
      ++np_total;
      np_hits += evals[k].predicted == none;
    }
  }
  if (m.count) {
    m.accuracy = static_cast<double>(hits) / static_cast<double>(m.count);
    m.loss /= static_cast<double>(m.count);
  }
  if (np_total) m.no_parent_recall = static_cast<double>(np_hits) / static_cast<double>(np_total);
  return m;
}

TrainResult train_detector(const DetectorConfig& cfg, const DetectorDataset& data, const Split& split,
                           const TrainOptions& opts) {
  cfg.validate();
  if (split.train.empty() || split.validation.empty()) throw ConfigError("train and validation partitions must be non-empty");
  const std::size_t m = data.candidate_count();
  for (std::size_t i : split.train) {
    const auto label = data.samples.at(i).label;
    if (label > m || (label == m && !cfg.no_parent))
      throw ContractError("child '" + data.samples[i].child_id + "' has no parent among the candidates");
  }

  // Labels used for fitting; shuffled for null-model runs.
  std::vector<std::size_t> labels(data.samples.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = data.samples[i].label;
  if (opts.shuffle_labels) {
    std::vector<std::size_t> train_labels;
    for (std::size_t i : split.train) train_labels.push_back(labels[i]);
    std::mt19937_64 rng(derive_seed({opts.seed, kLabelTag}));
    std::shuffle(train_labels.begin(), train_labels.end(), rng);
    for (std::size_t k = 0; k < split.train.size(); ++k) labels[split.train[k]] = train_labels[k];
  }

  TrainResult res;
  nn::ParamVector params = init_detector(cfg, derive_seed({opts.seed, kInitTag}));
  nn::Adam adam({.lr = opts.lr}, params.size());
  std::size_t start = 1;
  auto save = [&](std::size_t epoch) {
    if (!opts.checkpoint) return;
    nlohmann::json h = {{"kind", "checkpoint"},
                        {"config", cfg},
                        {"epoch", epoch},
                        {"adam_steps", adam.steps()},
                        {"best_epoch", res.best_epoch},
                        {"best_val_accuracy", res.best_val_accuracy},
                        {"log", log_json(res.log)}};
    std::vector<double> payload(params.values().begin(), params.values().end());
    payload.insert(payload.end(), adam.m().begin(), adam.m().end());
    payload.insert(payload.end(), adam.v().begin(), adam.v().end());
    payload.insert(payload.end(), res.params.values().begin(), res.params.values().end());
    write_framed(*opts.checkpoint, h, payload);
  };

  if (opts.resume && opts.checkpoint && std::filesystem::exists(*opts.checkpoint)) {
    auto [h, v] = read_framed(*opts.checkpoint);
    if (h.value("kind", "") != "checkpoint" || h.at("config").get<DetectorConfig>() != cfg)
      throw ConfigError(opts.checkpoint->string() + " was written for a different detector");
    const std::size_t n = params.size();
    if (v.size() != 4 * n) throw FormatError(opts.checkpoint->string() + ": payload size mismatch");
    auto part = [&](std::size_t k) { return std::vector<double>(v.begin() + k * n, v.begin() + (k + 1) * n); };
    params = nn::ParamVector(params.layout(), part(0));
    adam.restore(h.at("adam_steps").get<std::uint64_t>(), part(1), part(2));
    res.params = nn::ParamVector(params.layout(), part(3));
    res.best_epoch = h.at("best_epoch").get<std::size_t>();
    res.best_val_accuracy = h.at("best_val_accuracy").get<double>();
    res.log = log_from_json(h.at("log"));
    start = h.at("epoch").get<std::size_t>() + 1;
  } else {
    const auto tr = evaluate_split(cfg, params, data, split.train, opts.workers);
    const auto va = evaluate_split(cfg, params, data, split.validation, opts.workers);
    res.log.push_back({0, tr.loss, va.loss, va.accuracy});
    res.params = params;
    res.best_val_accuracy = va.accuracy;
    save(0);
  }

  const std::size_t last = opts.stop_after ? std::min(*opts.stop_after, opts.epochs) : opts.epochs;
  for (std::size_t epoch = start; epoch <= last; ++epoch) {
    std::vector<std::size_t> order = split.train;
    std::mt19937_64 rng(derive_seed({opts.seed, kOrderTag, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      nn::Tape t(params);
      const std::size_t label = labels[i];
      nn::Var loss = nn::ops::softmax_xent(t, candidate_logits(t, cfg, data.samples[i].candidates), {&label, 1});
      const double l = t.value(loss)[0];
      if (!std::isfinite(l))
        throw NumericError("detector loss is not finite at epoch " + std::to_string(epoch) + " on child '" +
                           data.samples[i].child_id + "'");
      total += l;
      adam.step(params, nn::grad_scalar(t, loss));
    }
    const auto va = evaluate_split(cfg, params, data, split.validation, opts.workers);
    res.log.push_back({epoch, total / static_cast<double>(order.size()), va.loss, va.accuracy});
    if (va.accuracy > res.best_val_accuracy) {
      res.best_val_accuracy = va.accuracy;
      res.best_epoch = epoch;
      res.params = params;
    }
    save(epoch);
  }
  res.epochs_done = res.log.empty() ? 0 : res.log.back().epoch;
  return res;
}

}  // namespace lineage::detector
