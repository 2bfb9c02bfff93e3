#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace rmtopo {

enum class LayerKind {
  Conv2d,          // dims: out_ch, in_ch, kh, kw
  MaxPool2x2,      // dims: floor_mode (0 strict, 1 drop trailing odd row/col)
  Relu,            // dims: none
  Tanh,            // dims: none
  FullyConnected,  // dims: out, in
  Recurrent,       // dims: hidden, in, steps
  Flatten,         // dims: none
  SoftmaxXent,     // dims: classes
};

const char* to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind;
  std::vector<int> dims;
};

/// Sequential network description. Input is [C,H,W] per sample.
///
/// The Recurrent layer consumes a [C,T,W] map as a T-step sequence: step t
/// takes row t, averaged over the W columns, as its C-element input.
struct NetworkSpec {
  std::string name;
  double scale = 1.0;
  std::vector<int> input_shape;
  std::vector<LayerSpec> layers;
};

/// Shape after each layer; throws DimensionError on any inconsistency.
std::vector<std::vector<int>> propagate_shapes(const NetworkSpec& net);
/// Number of logical weights (one per differential pair).
std::size_t parameter_count(const NetworkSpec& net);

int scaled_count(int full, double scale);

/// Number of output classes (logit count).
int output_classes(const NetworkSpec& net);

/// 2 conv + 2 FC classifier on 1x14x14 inputs.
NetworkSpec build_cnn(double scale, int classes = 10);
/// 2 conv + recurrent + 2 FC classifier on 1x23x15 inputs.
NetworkSpec build_crnn(double scale, int classes = 10);

void to_json(nlohmann::json& j, const NetworkSpec& net);
void from_json(const nlohmann::json& j, NetworkSpec& net);

}  // namespace rmtopo
