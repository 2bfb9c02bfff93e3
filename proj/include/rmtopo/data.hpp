#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rmtopo/tensor.hpp"

namespace rmtopo {

struct Dataset {
  std::string name;
  int class_count = 0;
  std::vector<Tensor> samples;
  std::vector<int> labels;

  std::size_t size() const { return samples.size(); }
  /// Throws ArgumentError unless shapes agree and labels are in range.
  void validate() const;
};

/// IDX image file (magic 0x00000803) paired with a label file (0x00000801).
/// Pixels are scaled by 1/255 into [0,1] and shaped (1,H,W).
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 int class_count = 10);
/// In-memory variant; `source` names the inputs in error messages.
Dataset parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels,
                  int class_count = 10);

/// 2x2 mean-pool down to target_hw, then floor-quantize to 2^bits levels of
/// [0,1): v -> min(floor(v * 2^bits), 2^bits - 1) / 2^bits.
Dataset preprocess_fashion(const Dataset& ds, int target_hw = 14, int bits = 4);

/// Feature-map CSV: header "H,W,classes", then rows "label,v1,...,v(H*W)".
Dataset load_feature_csv(const std::string& path);
Dataset parse_feature_csv(std::istream& is);
/// Writes values with 6 significant digits.
void write_feature_csv(std::ostream& os, const Dataset& ds);

/// Gaussian class prototypes (unit-variance entries scaled to `separation`
/// over the prototype norm) plus isotropic noise of std `noise`.
Dataset synth_blobs(int classes, int per_class, const std::vector<int>& shape, double separation,
                    std::uint64_t seed, double noise = 0.1);

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Seeded shuffle, then disjoint consecutive slices.
Splits split(const Dataset& ds, std::size_t train_n, std::size_t val_n, std::size_t test_n,
             std::uint64_t seed);

}  // namespace rmtopo
