#include "lineage/zoo/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lineage/errors.hpp"
#include "lineage/nn/adam.hpp"
#include "lineage/nn/ops.hpp"

namespace lineage::zoo {

void RegularizerSpec::validate() const {
  switch (kind) {
    case RegKind::none:
      return;
    case RegKind::ewc:
      if (!(weight > 0.0)) throw ConfigError("ewc weight must be positive");
      if (fisher_samples == 0) throw ConfigError("ewc needs at least one Fisher sample");
      return;
    case RegKind::kld:
      if (teacher_id.empty()) throw ConfigError("kld regularizer needs a teacher id");
      if (!(temperature > 0.0)) throw ConfigError("kld temperature must be positive");
      if (!(weight > 0.0)) throw ConfigError("kld weight must be positive");
      return;
  }
}

std::string RegularizerSpec::label() const {
  char buf[64];
  switch (kind) {
    case RegKind::none:
      return "none";
    case RegKind::ewc:
      std::snprintf(buf, sizeof buf, "ewc(%g)", weight);
      return buf;
    case RegKind::kld:
      std::snprintf(buf, sizeof buf, "kld(%g,T=%g)", weight, temperature);
      return buf;
  }
  return "none";
}

void to_json(nlohmann::json& j, const RegularizerSpec& r) {
  switch (r.kind) {
    case RegKind::none:
      j = nlohmann::json{{"kind", "none"}};
      break;
    case RegKind::ewc:
      j = nlohmann::json{{"kind", "ewc"}, {"weight", r.weight}, {"fisher_samples", r.fisher_samples}};
      break;
    case RegKind::kld:
      j = nlohmann::json{
          {"kind", "kld"}, {"weight", r.weight}, {"teacher_id", r.teacher_id}, {"temperature", r.temperature}};
      break;
  }
}

void from_json(const nlohmann::json& j, RegularizerSpec& r) {
  r = RegularizerSpec{};
  const std::string kind = j.value("kind", std::string("none"));
  if (kind == "none") {
    r.kind = RegKind::none;
  } else if (kind == "ewc") {
    r.kind = RegKind::ewc;
    r.weight = j.value("weight", 0.0);
    r.fisher_samples = j.value("fisher_samples", r.fisher_samples);
  } else if (kind == "kld") {
    r.kind = RegKind::kld;
    r.weight = j.value("weight", 0.0);
    r.teacher_id = j.value("teacher_id", std::string{});
    r.temperature = j.value("temperature", r.temperature);
  } else {
    throw ConfigError("unknown regularizer '" + kind + "'");
  }
}

namespace {

nn::Var logits_on(nn::Tape& t, const nn::ArchSpec& arch, const nn::Tensor& x) {
  nn::Var h = t.constant(x);
  const std::size_t L = arch.num_linear();
  for (std::size_t i = 1; i <= L; ++i) {
    const std::string fc = "fc" + std::to_string(i);
    h = nn::ops::linear(t, h, t.param(fc + ".weight"), t.param(fc + ".bias"));
    if (i < L) h = arch.activation == nn::Activation::relu ? nn::ops::relu(t, h) : nn::ops::tanh(t, h);
  }
  return h;
}

nn::Tensor softmax_rows(const nn::Tensor& logits, double temperature) {
  nn::Tensor p(logits.shape());
  const std::size_t n = logits.rows(), k = logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(i, j) / temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p.at(i, j) = std::exp(logits.at(i, j) / temperature - mx));
    for (std::size_t j = 0; j < k; ++j) p.at(i, j) /= z;
  }
  return p;
}

}  // namespace

nn::ParamVector train_classifier(const nn::ArchSpec& arch, nn::ParamVector params, const Dataset& train,
                                 const TrainConfig& cfg, const Objective& objective) {
  if (train.classes < 2) throw ContractError("training needs at least two classes");
  if (train.classes > arch.output_dim())
    throw ContractError("task has " + std::to_string(train.classes) + " classes, network has " +
                        std::to_string(arch.output_dim()) + " outputs");
  if (train.size() == 0) throw ContractError("empty training set");
  if (cfg.batch == 0) throw ConfigError("batch size must be positive");
  if (objective.kld && objective.kld->teacher_arch.output_dim() != arch.output_dim())
    throw ConfigError("kld teacher output width differs from the student");

  nn::Adam opt({cfg.lr}, params.size());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::size_t batch = std::min(cfg.batch, train.size());

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<std::size_t> idx;
    idx.reserve(batch);
    while (idx.size() < batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const Dataset b = train.subset(idx);

    nn::Tape t(params);
    const nn::Var logits = logits_on(t, arch, b.x);
    nn::Var loss = nn::ops::softmax_xent(t, logits, b.y);
    if (objective.kld) {
      const auto& k = *objective.kld;
      const nn::Tensor teacher_logits = nn::forward(k.teacher_arch, k.teacher, b.x).outputs();
      // T²·KL(p_t ‖ p_s) up to a constant: −T²/N Σ p_t log p_s.
      nn::Tensor w = softmax_rows(teacher_logits, k.temperature);
      const double s = -k.weight * k.temperature * k.temperature / static_cast<double>(b.size());
      for (double& v : w.data()) v *= s;
      const nn::Var logp = nn::ops::log_softmax_rows(t, nn::ops::scale(t, logits, 1.0 / k.temperature));
      loss = nn::ops::add(t, loss, nn::ops::weighted_sum(t, logp, std::move(w)));
    }
    nn::ParamVector grad = nn::grad_scalar(t, loss);
    if (objective.ewc) {
      const auto& e = *objective.ewc;
      auto g = grad.values();
      auto th = params.values();
      auto a = e.anchor.values();
      auto f = e.fisher.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * e.weight * f[i] * (th[i] - a[i]);
    }
    opt.step(params, grad);
    if (!params.all_finite()) throw NumericError("training diverged at iteration " + std::to_string(it));
  }
  return params;
}

double accuracy(const nn::ArchSpec& arch, const nn::ParamVector& params, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const nn::Tensor out = nn::forward(arch, params, data.x).outputs();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto row = out.row_span(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == data.y[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

nn::ParamVector diagonal_fisher(const nn::ArchSpec& arch, const nn::ParamVector& params, const Dataset& data,
                                std::size_t samples, std::uint64_t seed) {
  nn::ParamVector fisher(params.layout());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = std::min(samples, data.size());
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t i = order[s];
    nn::Tape t(params);
    const nn::Var logits = logits_on(t, arch, nn::Tensor::row(data.x.row_span(i)));
    const std::size_t label[] = {data.y[i]};
    nn::ParamVector g = nn::grad_scalar(t, nn::ops::softmax_xent(t, logits, label));
    auto f = fisher.values();
    auto gv = g.values();
    for (std::size_t j = 0; j < f.size(); ++j) f[j] += gv[j] * gv[j];
  }
  if (n > 0) fisher *= 1.0 / static_cast<double>(n);
  return fisher;
}

}  // namespace lineage::zoo
