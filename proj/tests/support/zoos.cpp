#include "support/zoos.hpp"

#include <string>

#include "lineage/util/seed.hpp"

namespace lineage::testing {

std::vector<zoo::TaskSpec> desk_tasks(std::uint64_t seed, int child_generations) {
  std::vector<zoo::TaskSpec> tasks;
  for (int g = 0; g <= child_generations; ++g) {
    zoo::TaskSpec t;
    t.name = "t" + std::to_string(g);
    t.classes = 5;
    t.dims = 16;
    t.spread = 0.5;
    if (g == 0) {
      t.seed = derive_seed({seed, 100});
    } else {
      t.seed = derive_seed({seed, 101});
      t.active_dims = 8;
      t.clusters = 10;
      t.label_seed = static_cast<std::uint64_t>(g);
    }
    tasks.push_back(t);
  }
  return tasks;
}

zoo::HyperGrid desk_parent_grid() {
  zoo::HyperGrid g;
  g.lrs = {1e-2, 3e-3};
  g.batches = {32};
  g.iterations = {300};
  g.replicates = 3;
  return g;
}

zoo::HyperGrid desk_child_grid() {
  zoo::HyperGrid g;
  g.lrs = {1e-2, 1e-3};
  g.batches = {32, 128};
  g.iterations = {300, 600};
  g.replicates = 2;
  return g;
}

zoo::BuildOptions desk_options(std::uint64_t seed, std::size_t workers) {
  zoo::BuildOptions o;
  o.seed = seed;
  o.accuracy_floor = 0.8;
  o.workers = workers;
  o.shared_parent_init = true;
  return o;
}

zoo::Zoo desk_zoo(std::uint64_t seed, int child_generations, std::size_t workers) {
  return zoo::build_generations(desk_tasks(seed, child_generations), desk_parent_grid(), 6, {desk_child_grid()},
                                desk_options(seed, workers));
}

zoo::Zoo tiny_zoo(std::uint64_t seed, const TinyZoo& shape) {
  std::vector<zoo::TaskSpec> tasks;
  for (int g = 0; g <= shape.child_generations; ++g) {
    zoo::TaskSpec t;
    t.name = "tiny" + std::to_string(g);
    t.seed = derive_seed({seed, 50, static_cast<std::uint64_t>(g)});
    t.classes = shape.classes;
    t.dims = 6;
    t.spread = 0.5;
    t.train_count = 96;
    t.test_count = 48;
    tasks.push_back(t);
  }
  zoo::HyperGrid pg;
  pg.lrs = {1e-2};
  pg.batches = {16};
  pg.iterations = {shape.iterations};
  pg.replicates = shape.parents;
  zoo::HyperGrid cg;
  cg.lrs = {1e-2, 3e-3};
  cg.batches = {16};
  cg.iterations = {shape.iterations};
  cg.replicates = shape.children / 2;
  zoo::BuildOptions o;
  o.seed = seed;
  o.accuracy_floor = 0.0;
  o.hidden = {8, 6};
  return zoo::build_generations(tasks, pg, shape.parents, {cg}, o);
}

}  // namespace lineage::testing
