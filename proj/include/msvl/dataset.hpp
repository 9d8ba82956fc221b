#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msvl/calibration.hpp"
#include "msvl/error.hpp"
#include "msvl/image_io.hpp"
#include "msvl/model.hpp"
#include "msvl/phantom.hpp"
#include "msvl/reconstruction.hpp"
#include "msvl/train.hpp"
#include "msvl/util.hpp"

namespace msvl {

/// Converts one decoded image to the input an architecture consumes. The
/// spectral architectures need a matrix; the RGB baseline ignores it.
inline ModelInput prepare_input(const Image8& image, const ModelConfig& cfg, const TransformationMatrix* matrix,
                                bool srgb_decoded = true) {
  const LinearRgbImage rgb = to_linear(image, srgb_decoded);
  if (cfg.arch == Arch::rgb_baseline) return rgb;
  if (!matrix) throw InvalidInput(to_string(cfg.arch) + " needs a transformation matrix to reconstruct cubes");
  auto cube = reconstruct_cube(*matrix, rgb, srgb_decoded).first;
  if (cfg.arch == Arch::single_band) return extract_view(cube, cfg.band);
  return cube;
}

inline std::vector<Sample> samples_from_images(std::span<const PhantomImage> images, const std::string& split,
                                               const ModelConfig& cfg, const TransformationMatrix* matrix,
                                               std::size_t threads = 1) {
  std::vector<const PhantomImage*> picked;
  for (const auto& im : images)
    if (im.split == split) picked.push_back(&im);
  std::vector<Sample> out(picked.size());
  parallel_for(picked.size(), threads, [&](std::size_t i) {
    out[i] = {prepare_input(picked[i]->image, cfg, matrix), picked[i]->label, std::to_string(picked[i]->group),
              picked[i]->id};
  });
  return out;
}

/// Loads one split of a manifest directory; ids are the manifest paths.
inline std::vector<Sample> load_split(const std::string& dir, const std::string& split, const ModelConfig& cfg,
                                      const TransformationMatrix* matrix, std::size_t threads = 1,
                                      bool srgb_decoded = true) {
  namespace fs = std::filesystem;
  const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
  const auto records = parse_manifest(read_file_text(manifest_path), manifest_path);
  std::vector<const ManifestRecord*> picked;
  for (const auto& r : records)
    if (r.split == split) picked.push_back(&r);
  std::vector<Sample> out(picked.size());
  parallel_for(picked.size(), threads, [&](std::size_t i) {
    const auto& r = *picked[i];
    const Image8 image = read_image((fs::path(dir) / r.path).string());
    out[i] = {prepare_input(image, cfg, matrix, srgb_decoded), r.label, r.group, r.path};
  });
  return out;
}

}  // namespace msvl
