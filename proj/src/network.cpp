#include "rmtopo/network.hpp"

#include <cmath>

#include "rmtopo/errors.hpp"
#include "rmtopo/tensor.hpp"

namespace rmtopo {

namespace {

struct KindName {
  LayerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::Conv2d, "Conv2d"},
    {LayerKind::MaxPool2x2, "MaxPool2x2"},
    {LayerKind::Relu, "Relu"},
    {LayerKind::Tanh, "Tanh"},
    {LayerKind::FullyConnected, "FullyConnected"},
    {LayerKind::Recurrent, "Recurrent"},
    {LayerKind::Flatten, "Flatten"},
    {LayerKind::SoftmaxXent, "SoftmaxXent"},
};

void expect_dims(const LayerSpec& l, std::size_t n, std::size_t index) {
  if (l.dims.size() != n)
    throw DimensionError("layer " + std::to_string(index) + " (" + to_string(l.kind) +
                         ") expects " + std::to_string(n) + " dims, got " +
                         std::to_string(l.dims.size()));
  for (int d : l.dims)
    if (d < 0 || (d == 0 && l.kind != LayerKind::MaxPool2x2))
      throw DimensionError("layer " + std::to_string(index) + " has a non-positive dim");
}

std::string at_layer(std::size_t i, LayerKind k) {
  return "layer " + std::to_string(i) + " (" + to_string(k) + ")";
}

}  // namespace

const char* to_string(LayerKind k) {
  for (const auto& kn : kKindNames)
    if (kn.kind == k) return kn.name;
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (const auto& kn : kKindNames)
    if (s == kn.name) return kn.kind;
  throw ConfigError("unknown layer kind '" + s + "'");
}

std::vector<std::vector<int>> propagate_shapes(const NetworkSpec& net) {
  if (net.input_shape.size() != 3) throw DimensionError("network input must be [C,H,W]");
  shape_numel(net.input_shape);
  std::vector<std::vector<int>> out;
  std::vector<int> s = net.input_shape;
  bool seen_loss = false;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (seen_loss) throw DimensionError("SoftmaxXent must be the last layer");
    switch (l.kind) {
      case LayerKind::Conv2d: {
        expect_dims(l, 4, i);
        if (s.size() != 3 || s[0] != l.dims[1])
          throw DimensionError(at_layer(i, l.kind) + ": input " + shape_to_string(s) +
                               " does not have " + std::to_string(l.dims[1]) + " channels");
        if (s[1] < l.dims[2] || s[2] < l.dims[3])
          throw DimensionError(at_layer(i, l.kind) + ": input smaller than kernel");
        s = {l.dims[0], s[1] - l.dims[2] + 1, s[2] - l.dims[3] + 1};
        break;
      }
      case LayerKind::MaxPool2x2: {
        if (l.dims.size() > 1) throw DimensionError(at_layer(i, l.kind) + ": too many dims");
        const bool floor_mode = !l.dims.empty() && l.dims[0] != 0;
        if (s.size() != 3) throw DimensionError(at_layer(i, l.kind) + ": needs a [C,H,W] input");
        if (!floor_mode && (s[1] % 2 || s[2] % 2))
          throw DimensionError(at_layer(i, l.kind) + ": odd spatial dims " + shape_to_string(s));
        if (s[1] < 2 || s[2] < 2) throw DimensionError(at_layer(i, l.kind) + ": input too small");
        s = {s[0], s[1] / 2, s[2] / 2};
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Tanh:
        expect_dims(l, 0, i);
        break;
      case LayerKind::Flatten:
        expect_dims(l, 0, i);
        s = {static_cast<int>(shape_numel(s))};
        break;
      case LayerKind::FullyConnected:
        expect_dims(l, 2, i);
        if (s.size() != 1 || s[0] != l.dims[1])
          throw DimensionError(at_layer(i, l.kind) + ": input " + shape_to_string(s) +
                               " does not match in=" + std::to_string(l.dims[1]));
        s = {l.dims[0]};
        break;
      case LayerKind::Recurrent:
        expect_dims(l, 3, i);
        if (s.size() != 3 || s[0] != l.dims[1] || s[1] != l.dims[2])
          throw DimensionError(at_layer(i, l.kind) + ": input " + shape_to_string(s) +
                               " is not [in=" + std::to_string(l.dims[1]) +
                               ", steps=" + std::to_string(l.dims[2]) + ", W]");
        s = {l.dims[0]};
        break;
      case LayerKind::SoftmaxXent:
        expect_dims(l, 1, i);
        if (s.size() != 1 || s[0] != l.dims[0])
          throw DimensionError(at_layer(i, l.kind) + ": logits " + shape_to_string(s) +
                               " do not match " + std::to_string(l.dims[0]) + " classes");
        seen_loss = true;
        break;
    }
    out.push_back(s);
  }
  return out;
}

std::size_t parameter_count(const NetworkSpec& net) {
  std::size_t n = 0;
  for (const LayerSpec& l : net.layers) {
    switch (l.kind) {
      case LayerKind::Conv2d:
        n += static_cast<std::size_t>(l.dims.at(0)) * l.dims.at(1) * l.dims.at(2) * l.dims.at(3);
        break;
      case LayerKind::FullyConnected:
        n += static_cast<std::size_t>(l.dims.at(0)) * l.dims.at(1);
        break;
      case LayerKind::Recurrent:
        n += static_cast<std::size_t>(l.dims.at(0)) * l.dims.at(1) +
             static_cast<std::size_t>(l.dims.at(0)) * l.dims.at(0);
        break;
      default:
        break;
    }
  }
  return n;
}

int scaled_count(int full, double scale) {
  if (!(scale > 0)) throw ConfigError("network scale must be positive");
  // Small epsilon keeps exact products (e.g. 64 * 0.125) from rounding up.
  const int n = static_cast<int>(std::ceil(full * scale - 1e-9));
  return n < 1 ? 1 : n;
}

NetworkSpec build_cnn(double scale, int classes) {
  const int c1 = scaled_count(64, scale);
  const int c2 = scaled_count(16, scale);
  const int f1 = scaled_count(128, scale);
  NetworkSpec net;
  net.name = "cnn";
  net.scale = scale;
  net.input_shape = {1, 14, 14};
  net.layers = {
      {LayerKind::Conv2d, {c1, 1, 3, 3}},
      {LayerKind::Relu, {}},
      {LayerKind::Conv2d, {c2, c1, 3, 3}},
      {LayerKind::Relu, {}},
      {LayerKind::MaxPool2x2, {0}},
      {LayerKind::Flatten, {}},
      {LayerKind::FullyConnected, {f1, c2 * 5 * 5}},
      {LayerKind::Relu, {}},
      {LayerKind::FullyConnected, {classes, f1}},
      {LayerKind::SoftmaxXent, {classes}},
  };
  return net;
}

NetworkSpec build_crnn(double scale, int classes) {
  const int c1 = scaled_count(64, scale);
  const int c2 = scaled_count(32, scale);
  const int hidden = scaled_count(128, scale);
  const int f1 = scaled_count(256, scale);
  NetworkSpec net;
  net.name = "crnn";
  net.scale = scale;
  net.input_shape = {1, 23, 15};
  // 23x15 -> conv 21x14 -> pool 10x7 -> conv 8x6 -> pool 4x3 -> 4 steps.
  net.layers = {
      {LayerKind::Conv2d, {c1, 1, 3, 2}},
      {LayerKind::Relu, {}},
      {LayerKind::MaxPool2x2, {1}},
      {LayerKind::Conv2d, {c2, c1, 3, 2}},
      {LayerKind::Relu, {}},
      {LayerKind::MaxPool2x2, {1}},
      {LayerKind::Recurrent, {hidden, c2, 4}},
      {LayerKind::FullyConnected, {f1, hidden}},
      {LayerKind::Relu, {}},
      {LayerKind::FullyConnected, {classes, f1}},
      {LayerKind::SoftmaxXent, {classes}},
  };
  return net;
}

void to_json(nlohmann::json& j, const NetworkSpec& net) {
  j = nlohmann::json{{"name", net.name}, {"scale", net.scale}, {"input_shape", net.input_shape}};
  auto layers = nlohmann::json::array();
  for (const LayerSpec& l : net.layers)
    layers.push_back({{"kind", to_string(l.kind)}, {"dims", l.dims}});
  j["layers"] = std::move(layers);
}

int output_classes(const NetworkSpec& net) {
  if (!net.layers.empty() && net.layers.back().kind == LayerKind::SoftmaxXent)
    return net.layers.back().dims.at(0);
  return propagate_shapes(net).back().at(0);
}

void from_json(const nlohmann::json& j, NetworkSpec& net) {
  try {
    if (j.contains("layers")) {
      net.name = j.value("name", std::string("custom"));
      net.scale = j.value("scale", 1.0);
      net.input_shape = j.at("input_shape").get<std::vector<int>>();
      net.layers.clear();
      for (const auto& l : j.at("layers"))
        net.layers.push_back({layer_kind_from_string(l.at("kind").get<std::string>()),
                              l.value("dims", std::vector<int>{})});
    } else {
      const std::string name = j.at("name").get<std::string>();
      const double scale = j.value("scale", 1.0);
      const int classes = j.value("classes", 10);
      if (name == "cnn")
        net = build_cnn(scale, classes);
      else if (name == "crnn")
        net = build_crnn(scale, classes);
      else
        throw ConfigError("unknown network '" + name + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network spec: ") + e.what());
  }
  propagate_shapes(net);
}

}  // namespace rmtopo
