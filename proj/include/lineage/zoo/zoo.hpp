#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lineage/nn/mlp.hpp"
#include "lineage/zoo/task.hpp"
#include "lineage/zoo/train.hpp"

namespace lineage::zoo {

inline constexpr int kManifestVersion = 1;

struct Tuning {
  double lr = 0.0;
  std::size_t batch = 0;
  std::size_t iterations = 0;
  std::size_t replicate = 0;
  std::size_t grid_index = 0;
  std::uint64_t seed = 0;
  RegularizerSpec reg;
};

struct ModelRecord {
  std::string id;
  nn::ArchSpec arch;
  nn::ParamVector params;
  int generation = 1;
  std::optional<std::string> parent_id;
  std::string task;  // name of the task it was trained on
  std::size_t lineage = 0;  // index of the generation-1 root
  Tuning tuning;
  double test_accuracy = 0.0;
  bool promoted = false;  // parent-of-record for the next generation
};

// Cartesian product lr × batch × iterations × replicate × regularizer, in
// that nesting order (regularizer fastest).
struct HyperGrid {
  std::vector<double> lrs{1e-2, 1e-3};
  std::vector<std::size_t> batches{32, 128};
  std::vector<std::size_t> iterations{200};
  std::size_t replicates = 2;
  std::vector<RegularizerSpec> regularizers{RegularizerSpec{}};

  std::size_t size() const;
  // Grid point `i` with seed and grid_index left for the caller.
  Tuning at(std::size_t i) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const HyperGrid& g);
void from_json(const nlohmann::json& j, HyperGrid& g);

struct BuildOptions {
  std::uint64_t seed = 0;
  double accuracy_floor = 0.8;
  std::size_t workers = 1;
  std::vector<std::size_t> hidden{64, 32};
  nn::Activation activation = nn::Activation::relu;
  // All parents start from one initialization drawn from `seed`; they then
  // differ only through hyperparameters and data order.
  bool shared_parent_init = false;
};

// Trains one model per grid point on `task` and keeps the `count` best by test
// accuracy (ties by grid order). Throws Error listing accuracies when fewer
// than `count` reach the floor.
std::vector<ModelRecord> train_parents(const TaskSpec& task, const HyperGrid& grid, std::size_t count,
                                       const BuildOptions& opts);

struct Rejection {
  std::size_t grid_index = 0;
  double test_accuracy = 0.0;
  std::string reason;
};

struct FinetuneResult {
  std::vector<ModelRecord> children;
  std::vector<Rejection> rejected;
  // "no children passed" style summary when `children` is empty.
  std::string report() const;
};

// Resolves teacher ids for kld regularizers.
using RecordLookup = std::function<const ModelRecord*(const std::string& id)>;

// Fine-tunes `parent` on `task` at every grid point. Children whose
// parameters equal the parent's, or whose accuracy is below the floor, are
// rejected.
// `parent_task` is needed only for EWC (its Fisher is estimated there).
FinetuneResult finetune(const ModelRecord& parent, const TaskSpec& task, const HyperGrid& grid,
                        const BuildOptions& opts, const TaskSpec* parent_task = nullptr,
                        const RecordLookup& lookup = {});

struct Zoo {
  std::uint64_t seed = 0;
  double accuracy_floor = 0.8;
  std::vector<TaskSpec> tasks;  // tasks[0] is the parents' task
  std::vector<ModelRecord> records;
  std::vector<std::string> warnings;

  const ModelRecord& record(const std::string& id) const;
  const ModelRecord* find(const std::string& id) const;
  std::vector<const ModelRecord*> generation(int g) const;
  // Parents of record for children of generation g+1.
  std::vector<const ModelRecord*> parents_of_generation(int g) const;
  int max_generation() const;
  // Ancestor of `rec` at generation g (rec itself if g == rec.generation).
  const ModelRecord* ancestor(const ModelRecord& rec, int g) const;
  const TaskSpec& task(const std::string& name) const;
  // Throws FormatError if a parent id dangles or a chain does not end at generation 1.
  void validate() const;
};

// `samples` seeded rows of the task's test split, used to probe features.
// Tasks sharing a generator seed share their probe rows.
nn::Tensor probe_batch(const TaskSpec& task, std::size_t samples, std::uint64_t seed);

// Parents on tasks[0], then one generation per later task. In each generation
// the best child of every lineage is promoted; dead lineages are reported in
// `warnings` and stop.
Zoo build_generations(const std::vector<TaskSpec>& tasks, const HyperGrid& parent_grid, std::size_t parents,
                      const std::vector<HyperGrid>& child_grids, const BuildOptions& opts);

// Manifest (JSON, sorted keys, 2-space indent) without parameters.
nlohmann::json manifest_json(const Zoo& zoo);
std::string manifest_text(const Zoo& zoo);
// Metadata only; params are left empty until blobs are read.
Zoo zoo_from_manifest(const nlohmann::json& j);

std::string blob_path(const ModelRecord& rec);
void write_blob(const std::filesystem::path& path, const nn::ParamVector& params);
nn::ParamVector read_blob(const std::filesystem::path& path, const nn::ParamLayout& layout);

// Writes manifest.json plus blobs/<id>.f64 under `dir`. Refuses to replace an
// existing manifest.
void save_zoo(const Zoo& zoo, const std::filesystem::path& dir);
Zoo load_zoo(const std::filesystem::path& dir);

}  // namespace lineage::zoo
