#include "lineage/zoo/task.hpp"

#include <algorithm>
#include <random>

#include "lineage/errors.hpp"

namespace lineage::zoo {

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  const std::size_t d = dims();
  Dataset out;
  out.classes = classes;
  out.x = nn::Tensor({idx.size(), d});
  out.y.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = x.row_span(idx[r]);
    std::copy(src.begin(), src.end(), out.x.row_span(r).begin());
    out.y.push_back(y[idx[r]]);
  }
  return out;
}

std::size_t TaskSpec::input_dim() const {
  if (kind == TaskKind::gaussian_blobs) return dims;
  return 0;  // known only after loading
}

void to_json(nlohmann::json& j, const TaskSpec& t) {
  j = nlohmann::json{{"name", t.name}, {"train_count", t.train_count}, {"test_count", t.test_count}};
  if (t.kind == TaskKind::gaussian_blobs) {
    j["generator"] = "gaussian-blobs";
    j["seed"] = t.seed;
    j["classes"] = t.classes;
    j["dims"] = t.dims;
    j["active_dims"] = t.active_dims;
    j["spread"] = t.spread;
    j["clusters"] = t.clusters;
    j["label_seed"] = t.label_seed;
  } else {
    j["generator"] = "idx-files";
    j["images"] = t.images.generic_string();
    j["labels"] = t.labels.generic_string();
    j["subsample"] = t.subsample;
    j["seed"] = t.seed;
  }
}

void from_json(const nlohmann::json& j, TaskSpec& t) {
  t = TaskSpec{};
  t.name = j.value("name", std::string{});
  t.train_count = j.value("train_count", t.train_count);
  t.test_count = j.value("test_count", t.test_count);
  t.seed = j.value("seed", std::uint64_t{0});
  const std::string gen = j.value("generator", std::string("gaussian-blobs"));
  if (gen == "gaussian-blobs") {
    t.kind = TaskKind::gaussian_blobs;
    t.classes = j.value("classes", t.classes);
    t.dims = j.value("dims", t.dims);
    t.active_dims = j.value("active_dims", t.active_dims);
    t.spread = j.value("spread", t.spread);
    t.clusters = j.value("clusters", t.clusters);
    t.label_seed = j.value("label_seed", t.label_seed);
  } else if (gen == "idx-files") {
    t.kind = TaskKind::idx_files;
    t.images = j.at("images").get<std::string>();
    t.labels = j.at("labels").get<std::string>();
    t.subsample = j.value("subsample", std::size_t{0});
  } else {
    throw ConfigError("unknown task generator '" + gen + "'");
  }
}

namespace {

TaskData blobs(const TaskSpec& s) {
  if (s.dims == 0) throw ConfigError("task '" + s.name + "': dims must be positive");
  if (s.classes < 1) throw ConfigError("task '" + s.name + "': classes must be positive");
  if (!(s.spread > 0.0)) throw ConfigError("task '" + s.name + "': spread must be positive");
  const std::size_t active = s.active_dims == 0 ? s.dims : s.active_dims;
  if (active > s.dims) throw ConfigError("task '" + s.name + "': active_dims exceeds dims");
  const std::size_t clusters = s.clusters == 0 ? s.classes : s.clusters;
  if (clusters < s.classes) throw ConfigError("task '" + s.name + "': fewer clusters than classes");

  // Cluster → class. The default labels cluster k as k mod classes; a label
  // seed regroups the clusters (balanced) without touching the inputs.
  std::vector<std::size_t> group(clusters);
  for (std::size_t k = 0; k < clusters; ++k) group[k] = k % s.classes;
  if (s.label_seed != 0) {
    std::vector<std::size_t> perm(clusters);
    for (std::size_t k = 0; k < clusters; ++k) perm[k] = k;
    std::mt19937_64 lrng(s.label_seed);
    std::shuffle(perm.begin(), perm.end(), lrng);
    for (std::size_t k = 0; k < clusters; ++k) group[perm[k]] = k % s.classes;
  }

  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> centres(clusters * active);
  for (double& c : centres) c = normal(rng);

  auto draw = [&](std::size_t n) {
    Dataset d;
    d.classes = s.classes;
    d.x = nn::Tensor({n, s.dims});
    d.y.resize(n);
    std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = pick(rng);
      d.y[i] = group[c];
      for (std::size_t k = 0; k < active; ++k) d.x.at(i, k) = centres[c * active + k] + s.spread * normal(rng);
    }
    return d;
  };
  TaskData out;
  out.train = draw(s.train_count);
  out.test = draw(s.test_count);
  return out;
}

TaskData from_idx(const TaskSpec& s) {
  Dataset all = load_idx(s.images, s.labels);
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(s.seed);
  std::shuffle(order.begin(), order.end(), rng);
  if (s.subsample != 0 && s.subsample < order.size()) order.resize(s.subsample);
  if (s.train_count + s.test_count > order.size()) {
    throw ConfigError("task '" + s.name + "': needs " + std::to_string(s.train_count + s.test_count) +
                      " rows, IDX data has " + std::to_string(order.size()));
  }
  TaskData out;
  out.train = all.subset(std::span(order).subspan(0, s.train_count));
  out.test = all.subset(std::span(order).subspan(s.train_count, s.test_count));
  return out;
}

}  // namespace

TaskData generate(const TaskSpec& spec) {
  return spec.kind == TaskKind::gaussian_blobs ? blobs(spec) : from_idx(spec);
}

}  // namespace lineage::zoo
