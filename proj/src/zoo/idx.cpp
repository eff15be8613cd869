#include <cstdint>
#include <fstream>
#include <iterator>

#include "lineage/errors.hpp"
#include "lineage/zoo/task.hpp"

namespace lineage::zoo {
namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t off, const std::filesystem::path& p) {
  if (off + 4 > buf.size()) throw FormatError(p.string() + ": truncated header at byte offset " + std::to_string(off));
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
         std::uint32_t{buf[off + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = slurp(images);
  const auto lab = slurp(labels);

  const std::uint32_t img_magic = be32(img, 0, images);
  if (img_magic != 0x00000803)
    throw FormatError(images.string() + ": bad image magic at byte offset 0");
  const std::uint32_t lab_magic = be32(lab, 0, labels);
  if (lab_magic != 0x00000801)
    throw FormatError(labels.string() + ": bad label magic at byte offset 0");

  const std::size_t n = be32(img, 4, images), rows = be32(img, 8, images), cols = be32(img, 12, images);
  const std::size_t n_labels = be32(lab, 4, labels);
  if (n != n_labels) {
    throw FormatError("image count " + std::to_string(n) + " does not match label count " + std::to_string(n_labels));
  }
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels)
    throw FormatError(images.string() + ": truncated pixel data at byte offset " + std::to_string(img.size()));
  if (lab.size() < 8 + n) throw FormatError(labels.string() + ": truncated labels at byte offset " + std::to_string(lab.size()));

  Dataset d;
  d.x = nn::Tensor({n, pixels});
  d.y.resize(n);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) d.x[i * pixels + p] = img[16 + i * pixels + p] / 255.0;
    d.y[i] = lab[8 + i];
    max_label = std::max(max_label, d.y[i]);
  }
  d.classes = n == 0 ? 0 : max_label + 1;
  return d;
}

}  // namespace lineage::zoo
