#include "lineage/zoo/zoo.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "lineage/errors.hpp"
#include "lineage/util/parallel.hpp"
#include "lineage/util/seed.hpp"

namespace lineage::zoo {
namespace {

// Tags keep the init and data-order streams of one record apart.
constexpr std::uint64_t kInitTag = 0x1717;
constexpr std::uint64_t kOrderTag = 0x2929;
constexpr std::uint64_t kHeadTag = 0x3b3b;
constexpr std::uint64_t kFisherTag = 0x4d4d;

std::string fmt_acc(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", a);
  return buf;
}

}  // namespace

std::size_t HyperGrid::size() const {
  return lrs.size() * batches.size() * iterations.size() * replicates * regularizers.size();
}

Tuning HyperGrid::at(std::size_t i) const {
  if (i >= size()) throw ContractError("grid index out of range");
  Tuning t;
  t.grid_index = i;
  t.reg = regularizers[i % regularizers.size()];
  i /= regularizers.size();
  t.replicate = i % replicates;
  i /= replicates;
  t.iterations = iterations[i % iterations.size()];
  i /= iterations.size();
  t.batch = batches[i % batches.size()];
  i /= batches.size();
  t.lr = lrs[i];
  return t;
}

void HyperGrid::validate() const {
  if (size() == 0) throw ConfigError("hyperparameter grid is empty");
  for (double lr : lrs)
    if (!(lr > 0.0)) throw ConfigError("grid learning rates must be positive");
  for (std::size_t b : batches)
    if (b == 0) throw ConfigError("grid batch sizes must be positive");
  for (const auto& r : regularizers) r.validate();
}

void to_json(nlohmann::json& j, const HyperGrid& g) {
  j = nlohmann::json{{"lr", g.lrs},
                     {"batch", g.batches},
                     {"iterations", g.iterations},
                     {"replicates", g.replicates},
                     {"regularizers", g.regularizers}};
}

void from_json(const nlohmann::json& j, HyperGrid& g) {
  g = HyperGrid{};
  if (j.contains("lr")) g.lrs = j.at("lr").get<std::vector<double>>();
  if (j.contains("batch")) g.batches = j.at("batch").get<std::vector<std::size_t>>();
  if (j.contains("iterations")) g.iterations = j.at("iterations").get<std::vector<std::size_t>>();
  if (j.contains("replicates")) g.replicates = j.at("replicates").get<std::size_t>();
  if (j.contains("regularizers")) g.regularizers = j.at("regularizers").get<std::vector<RegularizerSpec>>();
}

std::vector<ModelRecord> train_parents(const TaskSpec& task, const HyperGrid& grid, std::size_t count,
                                       const BuildOptions& opts) {
  grid.validate();
  if (count == 0) throw ConfigError("parent count must be positive");
  const TaskData data = generate(task);
  if (data.train.classes < 2) throw ContractError("task '" + task.name + "' has fewer than two classes");
  for (const auto& r : grid.regularizers)
    if (r.kind != RegKind::none) throw ConfigError("parents are trained without regularizers");

  const nn::ArchSpec arch = nn::ArchSpec::mlp(data.train.dims(), data.train.classes, opts.hidden, opts.activation);
  std::vector<ModelRecord> all(grid.size());
  parallel_for(grid.size(), opts.workers, [&](std::size_t i) {
    ModelRecord& rec = all[i];
    rec.arch = arch;
    rec.generation = 1;
    rec.task = task.name;
    rec.tuning = grid.at(i);
    rec.tuning.seed = derive_seed({opts.seed, i, 1});
    TrainConfig cfg{rec.tuning.lr, rec.tuning.batch, rec.tuning.iterations,
                    derive_seed({rec.tuning.seed, kOrderTag})};
    const std::uint64_t init_seed =
        opts.shared_parent_init ? derive_seed({opts.seed, kInitTag}) : derive_seed({rec.tuning.seed, kInitTag});
    rec.params = train_classifier(arch, nn::init_params(arch, init_seed), data.train, cfg);
    rec.test_accuracy = accuracy(arch, rec.params, data.test);
  });

  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].test_accuracy > all[b].test_accuracy; });
  std::vector<ModelRecord> out;
  for (std::size_t i : order) {
    if (out.size() == count) break;
    if (all[i].test_accuracy < opts.accuracy_floor) break;
    ModelRecord rec = std::move(all[i]);
    rec.lineage = out.size();
    rec.id = "g1-p" + std::to_string(rec.lineage);
    out.push_back(std::move(rec));
  }
  if (out.size() < count) {
    std::string accs;
    for (std::size_t i : order) accs += (accs.empty() ? "" : ", ") + fmt_acc(all[i].test_accuracy);
    throw Error("only " + std::to_string(out.size()) + " of " + std::to_string(count) +
                " parents reached accuracy " + fmt_acc(opts.accuracy_floor) + " (accuracies: " + accs + ")");
  }
  return out;
}

std::string FinetuneResult::report() const {
  if (!children.empty()) return std::to_string(children.size()) + " children passed";
  std::string out = "no children passed";
  for (const auto& r : rejected)
    out += "\n  grid " + std::to_string(r.grid_index) + ": " + r.reason + " (accuracy " + fmt_acc(r.test_accuracy) + ")";
  return out;
}

FinetuneResult finetune(const ModelRecord& parent, const TaskSpec& task, const HyperGrid& grid,
                        const BuildOptions& opts, const TaskSpec* parent_task, const RecordLookup& lookup) {
  grid.validate();
  if (!(parent.params.layout() == nn::make_layout(parent.arch)))
    throw LayoutError("parent '" + parent.id + "' parameters do not match its architecture");
  const TaskData data = generate(task);
  if (data.train.dims() != parent.arch.input_dim()) {
    throw ConfigError("task '" + task.name + "' has " + std::to_string(data.train.dims()) +
                      " input dims, parent expects " + std::to_string(parent.arch.input_dim()));
  }
  const int generation = parent.generation + 1;

  nn::ArchSpec arch = parent.arch;
  nn::ParamVector start = parent.params;
  if (data.train.classes != parent.arch.output_dim()) {
    start = nn::reinit_head(parent.arch, parent.params, data.train.classes,
                            derive_seed({opts.seed, kHeadTag, parent.lineage, static_cast<std::uint64_t>(generation)}),
                            &arch);
  }

  // Shared anchors, computed once per parent.
  std::optional<nn::ParamVector> fisher;
  std::map<std::string, const ModelRecord*> teachers;
  for (const auto& reg : grid.regularizers) {
    if (reg.kind == RegKind::ewc && !fisher) {
      if (!parent_task) throw ConfigError("ewc needs the parent's task to estimate the Fisher diagonal");
      if (!(arch == parent.arch)) throw ConfigError("ewc with a reinitialized head is not supported");
      const TaskData pdata = generate(*parent_task);
      fisher = diagonal_fisher(parent.arch, parent.params, pdata.train, reg.fisher_samples,
                               derive_seed({opts.seed, kFisherTag, parent.lineage}));
    }
    if (reg.kind == RegKind::kld) {
      if (reg.teacher_id.empty()) throw ConfigError("kld regularizer needs a teacher id");
      if (reg.teacher_id == "parent") {
        teachers[reg.teacher_id] = &parent;
      } else {
        const ModelRecord* t = lookup ? lookup(reg.teacher_id) : nullptr;
        if (!t) throw ConfigError("kld teacher '" + reg.teacher_id + "' is not in the zoo");
        teachers[reg.teacher_id] = t;
      }
    }
  }

  std::vector<std::optional<ModelRecord>> slots(grid.size());
  std::vector<Rejection> rejections(grid.size());
  parallel_for(grid.size(), opts.workers, [&](std::size_t i) {
    ModelRecord rec;
    rec.arch = arch;
    rec.generation = generation;
    rec.parent_id = parent.id;
    rec.task = task.name;
    rec.lineage = parent.lineage;
    rec.tuning = grid.at(i);
    rec.tuning.seed = derive_seed({opts.seed, i, static_cast<std::uint64_t>(generation), parent.lineage});
    rec.id = "g" + std::to_string(generation) + "-p" + std::to_string(parent.lineage) + "-c" + std::to_string(i);

    Objective obj;
    if (rec.tuning.reg.kind == RegKind::ewc) obj.ewc = EwcTerm{rec.tuning.reg.weight, parent.params, *fisher};
    if (rec.tuning.reg.kind == RegKind::kld) {
      const ModelRecord* t = teachers.at(rec.tuning.reg.teacher_id);
      obj.kld = KldTerm{rec.tuning.reg.weight, rec.tuning.reg.temperature, t->arch, t->params};
    }
    TrainConfig cfg{rec.tuning.lr, rec.tuning.batch, rec.tuning.iterations,
                    derive_seed({rec.tuning.seed, kOrderTag})};
    rec.params = train_classifier(arch, start, data.train, cfg, obj);
    rec.test_accuracy = accuracy(arch, rec.params, data.test);

    if (rec.params == parent.params) {
      rejections[i] = {i, rec.test_accuracy, "degenerate: parameters equal the parent's"};
    } else if (rec.test_accuracy < opts.accuracy_floor) {
      rejections[i] = {i, rec.test_accuracy, "below accuracy floor " + fmt_acc(opts.accuracy_floor)};
    } else {
      slots[i] = std::move(rec);
    }
  });

  FinetuneResult out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (slots[i]) out.children.push_back(std::move(*slots[i]));
    else out.rejected.push_back(std::move(rejections[i]));
  }
  return out;
}

const ModelRecord* Zoo::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

const ModelRecord& Zoo::record(const std::string& id) const {
  if (const auto* r = find(id)) return *r;
  throw ContractError("no record '" + id + "' in the zoo");
}

std::vector<const ModelRecord*> Zoo::generation(int g) const {
  std::vector<const ModelRecord*> out;
  for (const auto& r : records)
    if (r.generation == g) out.push_back(&r);
  return out;
}

std::vector<const ModelRecord*> Zoo::parents_of_generation(int g) const {
  std::vector<const ModelRecord*> out;
  for (const auto& r : records)
    if (r.generation == g && (g == 1 || r.promoted)) out.push_back(&r);
  return out;
}

int Zoo::max_generation() const {
  int g = 0;
  for (const auto& r : records) g = std::max(g, r.generation);
  return g;
}

const ModelRecord* Zoo::ancestor(const ModelRecord& rec, int g) const {
  const ModelRecord* cur = &rec;
  while (cur && cur->generation > g) cur = cur->parent_id ? find(*cur->parent_id) : nullptr;
  return cur && cur->generation == g ? cur : nullptr;
}

void Zoo::validate() const {
  std::map<std::string, const ModelRecord*> by_id;
  for (const auto& r : records) {
    if (!by_id.emplace(r.id, &r).second) throw FormatError("duplicate record id '" + r.id + "'");
    if ((r.generation == 1) != !r.parent_id.has_value())
      throw FormatError("record '" + r.id + "': generation 1 must be exactly the records without a parent");
    if (r.test_accuracy < 0.0 || r.test_accuracy > 1.0)
      throw FormatError("record '" + r.id + "': test accuracy outside [0, 1]");
  }
  for (const auto& r : records) {
    const ModelRecord* cur = &r;
    std::size_t steps = 0;
    while (cur->parent_id) {
      auto it = by_id.find(*cur->parent_id);
      if (it == by_id.end()) throw FormatError("record '" + cur->id + "' names missing parent '" + *cur->parent_id + "'");
      if (it->second->generation != cur->generation - 1)
        throw FormatError("record '" + cur->id + "' skips a generation");
      cur = it->second;
      if (++steps > records.size()) throw FormatError("lineage cycle through '" + r.id + "'");
    }
  }
}

Zoo build_generations(const std::vector<TaskSpec>& tasks, const HyperGrid& parent_grid, std::size_t parents,
                      const std::vector<HyperGrid>& child_grids, const BuildOptions& opts) {
  if (tasks.size() < 2) throw ConfigError("a zoo needs a parent task and at least one fine-tuning task");
  if (child_grids.empty()) throw ConfigError("no fine-tuning grid given");
  Zoo zoo;
  zoo.seed = opts.seed;
  zoo.accuracy_floor = opts.accuracy_floor;
  for (const auto& t : tasks) {
    const TaskSpec* seen = nullptr;
    for (const auto& u : zoo.tasks)
      if (u.name == t.name) seen = &u;
    if (!seen) zoo.tasks.push_back(t);
    else if (nlohmann::json(*seen) != nlohmann::json(t))
      throw ConfigError("two different tasks are named '" + t.name + "'");
  }
  zoo.records = train_parents(tasks[0], parent_grid, parents, opts);

  std::vector<std::string> current;  // parent-of-record per lineage, "" if dead
  for (const auto& r : zoo.records) current.push_back(r.id);

  for (std::size_t step = 1; step < tasks.size(); ++step) {
    const HyperGrid& grid = child_grids[std::min(step - 1, child_grids.size() - 1)];
    const int generation = static_cast<int>(step) + 1;
    std::vector<ModelRecord> fresh;
    for (std::size_t lin = 0; lin < current.size(); ++lin) {
      if (current[lin].empty()) continue;
      const ModelRecord parent = zoo.record(current[lin]);
      const TaskSpec* parent_task = nullptr;
      for (const auto& t : zoo.tasks)
        if (t.name == parent.task) parent_task = &t;
      auto res = finetune(parent, tasks[step], grid, opts, parent_task,
                          [&zoo](const std::string& id) { return zoo.find(id); });
      if (res.children.empty()) {
        zoo.warnings.push_back("lineage " + std::to_string(lin) + " died at generation " + std::to_string(generation) +
                               ": " + res.report());
        current[lin].clear();
        continue;
      }
      std::size_t best = 0;
      for (std::size_t i = 1; i < res.children.size(); ++i)
        if (res.children[i].test_accuracy > res.children[best].test_accuracy) best = i;
      res.children[best].promoted = true;
      current[lin] = res.children[best].id;
      for (auto& c : res.children) fresh.push_back(std::move(c));
    }
    for (auto& r : fresh) zoo.records.push_back(std::move(r));
  }
  zoo.validate();
  return zoo;
}

const TaskSpec& Zoo::task(const std::string& name) const {
  for (const auto& t : tasks)
    if (t.name == name) return t;
  throw ConfigError("zoo has no task '" + name + "'");
}

nn::Tensor probe_batch(const TaskSpec& task, std::size_t samples, std::uint64_t seed) {
  const Dataset test = generate(task).test;
  std::vector<std::size_t> idx(test.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed({seed, task.seed}));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(samples, idx.size()));
  return test.subset(idx).x;
}

}  // namespace lineage::zoo
