#include <bit>
#include <cstring>
#include <fstream>

#include "lineage/errors.hpp"
#include "lineage/zoo/zoo.hpp"

namespace lineage::zoo {
namespace {

nlohmann::json arch_json(const nn::ArchSpec& a) {
  return {{"kind", std::string(nn::to_string(a.kind))},
          {"layer_sizes", a.layer_sizes},
          {"activation", std::string(nn::to_string(a.activation))}};
}

nn::ArchSpec arch_from(const nlohmann::json& j) {
  nn::ArchSpec a;
  a.kind = nn::parse_arch_kind(j.at("kind").get<std::string>());
  a.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  a.activation = nn::parse_activation(j.at("activation").get<std::string>());
  a.validate();
  return a;
}

nlohmann::json layout_json(const nn::ParamLayout& l) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& b : l.blocks()) out.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", b.offset}});
  return out;
}

nn::ParamLayout layout_from(const nlohmann::json& j) {
  std::vector<nn::ParamBlock> blocks;
  for (const auto& b : j)
    blocks.push_back({b.at("name").get<std::string>(), b.at("shape").get<nn::Shape>(), b.at("offset").get<std::size_t>()});
  return nn::ParamLayout(std::move(blocks));
}

nlohmann::json tuning_json(const Tuning& t) {
  return {{"lr", t.lr},         {"batch", t.batch}, {"iterations", t.iterations}, {"replicate", t.replicate},
          {"grid_index", t.grid_index}, {"seed", t.seed},   {"regularizer", t.reg}};
}

Tuning tuning_from(const nlohmann::json& j) {
  Tuning t;
  t.lr = j.at("lr").get<double>();
  t.batch = j.at("batch").get<std::size_t>();
  t.iterations = j.at("iterations").get<std::size_t>();
  t.replicate = j.at("replicate").get<std::size_t>();
  t.grid_index = j.at("grid_index").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.reg = j.at("regularizer").get<RegularizerSpec>();
  return t;
}

}  // namespace

std::string blob_path(const ModelRecord& rec) { return "blobs/" + rec.id + ".f64"; }

nlohmann::json manifest_json(const Zoo& zoo) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : zoo.records) {
    const nn::ParamLayout layout = nn::make_layout(r.arch);
    recs.push_back({{"id", r.id},
                    {"arch", arch_json(r.arch)},
                    {"layout", layout_json(layout)},
                    {"blob", blob_path(r)},
                    {"generation", r.generation},
                    {"parent_id", r.parent_id ? nlohmann::json(*r.parent_id) : nlohmann::json(nullptr)},
                    {"task", r.task},
                    {"lineage", r.lineage},
                    {"tuning", tuning_json(r.tuning)},
                    {"test_accuracy", r.test_accuracy},
                    {"promoted", r.promoted}});
  }
  return {{"format_version", kManifestVersion},
          {"seed", zoo.seed},
          {"accuracy_floor", zoo.accuracy_floor},
          {"tasks", zoo.tasks},
          {"records", recs},
          {"warnings", zoo.warnings}};
}

std::string manifest_text(const Zoo& zoo) { return manifest_json(zoo).dump(2) + "\n"; }

Zoo zoo_from_manifest(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kManifestVersion)
      throw FormatError("manifest format_version " + std::to_string(version) + " is not supported");
    Zoo zoo;
    zoo.seed = j.at("seed").get<std::uint64_t>();
    zoo.accuracy_floor = j.at("accuracy_floor").get<double>();
    zoo.tasks = j.at("tasks").get<std::vector<TaskSpec>>();
    zoo.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& rj : j.at("records")) {
      ModelRecord r;
      r.id = rj.at("id").get<std::string>();
      r.arch = arch_from(rj.at("arch"));
      if (!(layout_from(rj.at("layout")) == nn::make_layout(r.arch)))
        throw FormatError("record '" + r.id + "': layout does not match its architecture");
      if (rj.at("blob").get<std::string>() != blob_path(r))
        throw FormatError("record '" + r.id + "': unexpected blob path");
      r.generation = rj.at("generation").get<int>();
      if (!rj.at("parent_id").is_null()) r.parent_id = rj.at("parent_id").get<std::string>();
      r.task = rj.at("task").get<std::string>();
      r.lineage = rj.at("lineage").get<std::size_t>();
      r.tuning = tuning_from(rj.at("tuning"));
      r.test_accuracy = rj.at("test_accuracy").get<double>();
      r.promoted = rj.at("promoted").get<bool>();
      zoo.records.push_back(std::move(r));
    }
    zoo.validate();
    return zoo;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

void write_blob(const std::filesystem::path& path, const nn::ParamVector& params) {
  std::vector<unsigned char> bytes(params.size() * 8);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::uint64_t u;
    std::memcpy(&u, &params.values()[i], 8);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(u >> (8 * b));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

nn::ParamVector read_blob(const std::filesystem::path& path, const nn::ParamLayout& layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != layout.total() * 8) {
    throw FormatError(path.string() + ": " + std::to_string(bytes.size()) + " bytes, layout needs " +
                      std::to_string(layout.total() * 8));
  }
  std::vector<double> values(layout.total());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= std::uint64_t{bytes[i * 8 + b]} << (8 * b);
    std::memcpy(&values[i], &u, 8);
  }
  return nn::ParamVector(layout, std::move(values));
}

void save_zoo(const Zoo& zoo, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) throw ConfigError("refusing to overwrite existing manifest " + manifest.string());
  fs::create_directories(dir / "blobs");
  for (const auto& r : zoo.records) write_blob(dir / blob_path(r), r.params);
  const fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << manifest_text(zoo);
  }
  fs::rename(tmp, manifest);
}

Zoo load_zoo(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw ConfigError("no manifest at " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Zoo zoo = zoo_from_manifest(j);
  for (auto& r : zoo.records) r.params = read_blob(dir / blob_path(r), nn::make_layout(r.arch));
  return zoo;
}

}  // namespace lineage::zoo
