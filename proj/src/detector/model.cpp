#include "lineage/detector/model.hpp"

#include <cmath>
#include <random>

#include "lineage/errors.hpp"
#include "lineage/nn/ops.hpp"
#include "lineage/util/parallel.hpp"

namespace lineage::detector {
namespace {

using nn::Var;
namespace ops = nn::ops;

void add_encoder(nn::ParamLayout& l, const DetectorConfig& c, const std::string& p) {
  l.append(p + ".conv1.weight", {c.mid_channels, 2, 1, 1});
  l.append(p + ".conv1.bias", {c.mid_channels});
  l.append(p + ".conv2.weight", {c.d_model, c.mid_channels, 3, 3});
  l.append(p + ".conv2.bias", {c.d_model});
  l.append(p + ".norm.gamma", {c.d_model});
  l.append(p + ".norm.beta", {c.d_model});
}

void fill_uniform(std::span<double> v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& x : v) x = u(rng);
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

}  // namespace

void DetectorConfig::validate() const {
  if (d_model == 0 || heads == 0 || ffn == 0 || mid_channels == 0)
    throw ConfigError("detector sizes must be positive");
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (!use_weights && !use_features) throw ContractError("detector needs at least one modality");
}

void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = {{"d_model", c.d_model},         {"heads", c.heads},
       {"ffn", c.ffn},                 {"mid_channels", c.mid_channels},
       {"use_weights", c.use_weights}, {"use_features", c.use_features},
       {"no_parent", c.no_parent}};
}

void from_json(const nlohmann::json& j, DetectorConfig& c) {
  DetectorConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.heads = j.value("heads", d.heads);
  c.ffn = j.value("ffn", d.ffn);
  c.mid_channels = j.value("mid_channels", d.mid_channels);
  c.use_weights = j.value("use_weights", d.use_weights);
  c.use_features = j.value("use_features", d.use_features);
  c.no_parent = j.value("no_parent", d.no_parent);
}

nn::ParamLayout detector_layout(const DetectorConfig& c) {
  c.validate();
  nn::ParamLayout l;
  const std::size_t d = c.d_model;
  if (c.use_weights) {
    add_encoder(l, c, "wenc");
    l.append("emb.weight", {d});
  }
  if (c.use_features) {
    add_encoder(l, c, "fenc");
    l.append("emb.feature", {d});
  }
  l.append("cls", {d});
  l.append("tf.ln1.gamma", {d});
  l.append("tf.ln1.beta", {d});
  for (const char* m : {"q", "k", "v", "o"}) {
    l.append(std::string("tf.attn.w") + m, {d, d});
    l.append(std::string("tf.attn.b") + m, {d});
  }
  l.append("tf.ln2.gamma", {d});
  l.append("tf.ln2.beta", {d});
  l.append("tf.ffn1.weight", {c.ffn, d});
  l.append("tf.ffn1.bias", {c.ffn});
  l.append("tf.ffn2.weight", {d, c.ffn});
  l.append("tf.ffn2.bias", {d});
  l.append("head.weight", {1, d});
  l.append("head.bias", {1});
  if (c.no_parent) l.append("no_parent", {1});
  return l;
}

nn::ParamVector init_detector(const DetectorConfig& c, std::uint64_t seed) {
  nn::ParamVector p(detector_layout(c));
  std::mt19937_64 rng(seed);
  for (const auto& b : p.layout().blocks()) {
    auto v = p.block(b.name);
    const auto& n = b.name;
    if (n.ends_with(".gamma")) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (n.ends_with(".beta") || n == "no_parent") {
      // zeros
    } else if (n.ends_with("conv1.weight") || n.ends_with("conv1.bias")) {
      fill_uniform(v, inv_sqrt(2), rng);
    } else if (n.ends_with("conv2.weight") || n.ends_with("conv2.bias")) {
      fill_uniform(v, inv_sqrt(9 * c.mid_channels), rng);
    } else if (n.starts_with("tf.ffn2")) {
      fill_uniform(v, inv_sqrt(c.ffn), rng);
    } else {
      fill_uniform(v, inv_sqrt(c.d_model), rng);
    }
  }
  return p;
}

Var encode(nn::Tape& t, const DetectorConfig&, const std::string& p, Var planes) {
  Var h = ops::conv2d(t, planes, t.param(p + ".conv1.weight"), t.param(p + ".conv1.bias"), 0);
  h = ops::conv2d(t, h, t.param(p + ".conv2.weight"), t.param(p + ".conv2.bias"), 1);
  h = ops::instance_norm(t, h, t.param(p + ".norm.gamma"), t.param(p + ".norm.beta"));
  return ops::mean_trailing(t, ops::relu(t, h));
}

Var transformer_layer(nn::Tape& t, const DetectorConfig& c, Var x) {
  const std::size_t dh = c.d_model / c.heads;
  Var h = ops::layer_norm(t, x, t.param("tf.ln1.gamma"), t.param("tf.ln1.beta"));
  Var q = ops::linear(t, h, t.param("tf.attn.wq"), t.param("tf.attn.bq"));
  Var k = ops::linear(t, h, t.param("tf.attn.wk"), t.param("tf.attn.bk"));
  Var v = ops::linear(t, h, t.param("tf.attn.wv"), t.param("tf.attn.bv"));
  std::vector<Var> outs;
  for (std::size_t i = 0; i < c.heads; ++i) {
    Var qi = ops::slice_cols(t, q, i * dh, dh);
    Var ki = ops::slice_cols(t, k, i * dh, dh);
    Var vi = ops::slice_cols(t, v, i * dh, dh);
    Var s = ops::scale(t, ops::matmul(t, qi, ops::transpose(t, ki)), 1.0 / std::sqrt(static_cast<double>(dh)));
    outs.push_back(ops::matmul(t, ops::softmax_rows(t, s), vi));
  }
  Var a = ops::linear(t, ops::concat_cols(t, outs), t.param("tf.attn.wo"), t.param("tf.attn.bo"));
  x = ops::add(t, x, a);
  h = ops::layer_norm(t, x, t.param("tf.ln2.gamma"), t.param("tf.ln2.beta"));
  h = ops::relu(t, ops::linear(t, h, t.param("tf.ffn1.weight"), t.param("tf.ffn1.bias")));
  h = ops::linear(t, h, t.param("tf.ffn2.weight"), t.param("tf.ffn2.bias"));
  return ops::add(t, x, h);
}

Var detector_score(nn::Tape& t, const DetectorConfig& c, const StackedInput& in) {
  std::vector<Var> tokens{t.param("cls")};
  if (c.use_weights) {
    if (in.weights.numel() == 0) throw ContractError("weight planes missing for a weight-enabled detector");
    Var z = encode(t, c, "wenc", t.constant(in.weights));
    tokens.push_back(ops::add(t, z, t.param("emb.weight")));
  }
  if (c.use_features) {
    if (in.features.numel() == 0) throw ContractError("feature planes missing for a feature-enabled detector");
    Var z = encode(t, c, "fenc", t.constant(in.features));
    tokens.push_back(ops::add(t, z, t.param("emb.feature")));
  }
  Var y = transformer_layer(t, c, ops::concat_rows(t, tokens));
  return ops::linear(t, ops::slice_rows(t, y, 0, 1), t.param("head.weight"), t.param("head.bias"));
}

Var candidate_logits(nn::Tape& t, const DetectorConfig& c, std::span<const StackedInput> cands) {
  if (cands.empty()) throw ContractError("no parent candidates");
  std::vector<Var> scores;
  for (const auto& in : cands) scores.push_back(detector_score(t, c, in));
  Var s = ops::concat_cols(t, scores);
  if (!c.no_parent) return s;
  // (I − 11ᵀ/M) / M centres the scores and divides by M.
  const std::size_t m = cands.size();
  nn::Tensor centre({m, m});
  const double md = static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) centre.at(i, j) = ((i == j ? 1.0 : 0.0) - 1.0 / md) / md;
  Var norm = ops::matmul(t, s, t.constant(std::move(centre)));
  std::vector<Var> parts{norm, ops::reshape(t, t.param("no_parent"), {1, 1})};
  return ops::concat_cols(t, parts);
}

double detector_forward(const DetectorConfig& c, const nn::ParamVector& params, const StackedInput& in) {
  nn::Tape t(params);
  return t.value(detector_score(t, c, in))[0];
}

std::vector<double> score_candidates(const DetectorConfig& c, const nn::ParamVector& params,
                                     std::span<const StackedInput> cands, std::size_t workers) {
  std::vector<double> out(cands.size());
  parallel_for(cands.size(), workers, [&](std::size_t i) { out[i] = detector_forward(c, params, cands[i]); });
  return out;
}

std::size_t predict_no_parent(const DetectorConfig& c, const nn::ParamVector& params, std::span<const double> scores) {
  if (!c.no_parent || !params.layout().index_of("no_parent"))
    throw ContractError("detector has no no-parent scalar");
  if (scores.empty()) throw ContractError("no candidate scores");
  const double m = static_cast<double>(scores.size());
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= m;
  std::size_t best = 0;
  double best_v = (scores[0] - mean) / m;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const double v = (scores[i] - mean) / m;
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return params.block("no_parent")[0] > best_v ? scores.size() : best;
}

}  // namespace lineage::detector
