#include "lineage/detector/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "lineage/detector/planes.hpp"
#include "lineage/errors.hpp"
#include "lineage/nn/mlp.hpp"
#include "lineage/util/parallel.hpp"
#include "lineage/util/seed.hpp"

namespace lineage::detector {
namespace {

nn::Tensor as_plane(std::span<const double> v, bool pad) {
  const auto [h, w] = plane_shape(v.size());
  return reshape_to_planes(v, h, w, pad).values;
}

nn::Tensor weight_plane(const zoo::ModelRecord& r, const PlaneConfig& pc) {
  if (!r.params.layout().index_of(pc.weight_block))
    throw LayoutError("model '" + r.id + "' has no block '" + pc.weight_block + "'");
  return as_plane(r.params.block(pc.weight_block), pc.pad);
}

nn::Tensor feature_plane(const zoo::ModelRecord& r, const PlaneConfig& pc, const nn::Tensor& probe) {
  return as_plane(nn::features_at(r.arch, r.params, probe, pc.feature_tap).data(), pc.pad);
}

}  // namespace

void to_json(nlohmann::json& j, const PlaneConfig& c) {
  j = {{"weight_block", c.weight_block},
       {"feature_tap", c.feature_tap},
       {"feature_samples", c.feature_samples},
       {"pad", c.pad}};
}

void from_json(const nlohmann::json& j, PlaneConfig& c) {
  PlaneConfig d;
  c.weight_block = j.value("weight_block", d.weight_block);
  c.feature_tap = j.value("feature_tap", d.feature_tap);
  c.feature_samples = j.value("feature_samples", d.feature_samples);
  c.pad = j.value("pad", d.pad);
}

DetectorDataset build_dataset(const zoo::Zoo& zoo, const PlaneConfig& pc, const DatasetOptions& opts) {
  if (!opts.use_weights && !opts.use_features) throw ContractError("dataset needs at least one modality");
  auto cands = zoo.parents_of_generation(opts.ancestor_generation);
  if (opts.withhold_parent) {
    auto it = std::find_if(cands.begin(), cands.end(), [&](auto* r) { return r->id == *opts.withhold_parent; });
    if (it == cands.end())
      throw ConfigError("withheld parent '" + *opts.withhold_parent + "' is not a generation-" +
                        std::to_string(opts.ancestor_generation) + " candidate");
    cands.erase(it);
  }
  if (cands.empty()) throw ConfigError("no parent candidates at generation " + std::to_string(opts.ancestor_generation));

  DetectorDataset ds;
  for (const auto* c : cands) ds.candidate_ids.push_back(c->id);
  const std::size_t m = cands.size();

  std::vector<const zoo::ModelRecord*> children;
  std::vector<std::size_t> labels;
  for (const auto& r : zoo.records) {
    if (r.generation <= opts.ancestor_generation) continue;
    if (opts.descendant_generation && r.generation != *opts.descendant_generation) continue;
    const auto* anc = zoo.ancestor(r, opts.ancestor_generation);
    auto it = std::find(cands.begin(), cands.end(), anc);
    if (it != cands.end()) {
      labels.push_back(static_cast<std::size_t>(it - cands.begin()));
    } else if (opts.withhold_parent && anc && anc->id == *opts.withhold_parent) {
      labels.push_back(m);
    } else {
      ++ds.excluded;
      continue;
    }
    children.push_back(&r);
  }
  std::vector<std::size_t> order(children.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return children[a]->id < children[b]->id; });

  std::vector<nn::Tensor> parent_w(m);
  if (opts.use_weights)
    for (std::size_t i = 0; i < m; ++i) parent_w[i] = weight_plane(*cands[i], pc);

  // Parent feature planes depend on the probe batch, which depends on the
  // child's task.
  std::map<std::string, nn::Tensor> probes;
  std::map<std::string, std::vector<nn::Tensor>> parent_f;
  if (opts.use_features) {
    for (const auto* c : children) {
      if (probes.count(c->task)) continue;
      probes.emplace(c->task, zoo::probe_batch(zoo.task(c->task), pc.feature_samples, opts.input_seed));
      std::vector<nn::Tensor> planes(m);
      parallel_for(m, opts.workers, [&](std::size_t i) { planes[i] = feature_plane(*cands[i], pc, probes.at(c->task)); });
      parent_f.emplace(c->task, std::move(planes));
    }
  }

  ds.samples.resize(children.size());
  parallel_for(children.size(), opts.workers, [&](std::size_t k) {
    const auto& child = *children[order[k]];
    DetectorSample& s = ds.samples[k];
    s.child_id = child.id;
    s.label = labels[order[k]];
    nn::Tensor cw, cf;
    if (opts.use_weights) cw = weight_plane(child, pc);
    if (opts.use_features) cf = feature_plane(child, pc, probes.at(child.task));
    for (std::size_t i = 0; i < m; ++i) {
      StackedInput in;
      if (opts.use_weights) in.weights = stack_planes(parent_w[i], cw);
      if (opts.use_features) in.features = stack_planes(parent_f.at(child.task)[i], cf);
      s.candidates.push_back(std::move(in));
    }
  });
  return ds;
}

Split split_dataset(std::size_t n, std::uint64_t seed, double train_frac, double val_frac) {
  if (train_frac <= 0 || val_frac <= 0 || train_frac + val_frac >= 1)
    throw ConfigError("split fractions must be positive and leave room for a test partition");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed({seed, 0x5317}));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<long>(std::min(n_train, n)));
  s.validation.assign(idx.begin() + static_cast<long>(std::min(n_train, n)),
                      idx.begin() + static_cast<long>(std::min(n_train + n_val, n)));
  s.test.assign(idx.begin() + static_cast<long>(std::min(n_train + n_val, n)), idx.end());
  auto check = [n](const std::vector<std::size_t>& part, const char* name) {
    if (part.empty())
      throw ConfigError(std::string(name) + " partition is empty (" + std::to_string(n) + " samples)");
  };
  check(s.train, "train");
  check(s.validation, "validation");
  check(s.test, "test");
  for (auto* part : {&s.train, &s.validation, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

}  // namespace lineage::detector
