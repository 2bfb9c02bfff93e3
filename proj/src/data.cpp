#include "rmtopo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <sstream>

#include "rmtopo/errors.hpp"
#include "rmtopo/random.hpp"

namespace rmtopo {

void Dataset::validate() const {
  if (samples.size() != labels.size()) throw ArgumentError("dataset: sample/label count mismatch");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != samples.front().shape())
      throw ArgumentError("dataset: sample " + std::to_string(i) + " has shape " +
                          samples[i].shape_str() + ", expected " + samples.front().shape_str());
    if (labels[i] < 0 || labels[i] >= class_count)
      throw ArgumentError("dataset: label " + std::to_string(labels[i]) + " of sample " +
                          std::to_string(i) + " outside [0," + std::to_string(class_count) + ")");
  }
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const char* what) {
  if (b.size() < off + 4)
    throw ParseError(std::string(what) + ": truncated header at byte offset " + std::to_string(off) +
                     " (file has " + std::to_string(b.size()) + " bytes)");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace

Dataset parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels,
                  int class_count) {
  const std::uint32_t img_magic = be32(images, 0, "idx images");
  if (img_magic != 0x00000803)
    throw ParseError("idx images: bad magic 0x" + [&] {
      std::ostringstream os;
      os << std::hex << std::setw(8) << std::setfill('0') << img_magic;
      return os.str();
    }() + " at byte offset 0");
  const std::uint32_t n = be32(images, 4, "idx images");
  const std::uint32_t h = be32(images, 8, "idx images");
  const std::uint32_t w = be32(images, 12, "idx images");
  const std::size_t expected = 16 + static_cast<std::size_t>(n) * h * w;
  if (images.size() != expected)
    throw ParseError("idx images: expected " + std::to_string(expected) + " bytes, got " +
                     std::to_string(images.size()) + " (data starts at byte offset 16)");

  const std::uint32_t lbl_magic = be32(labels, 0, "idx labels");
  if (lbl_magic != 0x00000801) throw ParseError("idx labels: bad magic at byte offset 0");
  const std::uint32_t ln = be32(labels, 4, "idx labels");
  if (ln != n)
    throw ParseError("idx labels: count " + std::to_string(ln) + " does not match " +
                     std::to_string(n) + " images (byte offset 4)");
  if (labels.size() != 8 + static_cast<std::size_t>(n))
    throw ParseError("idx labels: expected " + std::to_string(8 + static_cast<std::size_t>(n)) +
                     " bytes, got " + std::to_string(labels.size()));

  Dataset ds;
  ds.name = "idx";
  ds.class_count = class_count;
  ds.samples.reserve(n);
  ds.labels.reserve(n);
  const std::size_t px = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> data(px);
    for (std::size_t p = 0; p < px; ++p) data[p] = images[16 + i * px + p] / 255.0;
    ds.samples.emplace_back(std::vector<int>{1, static_cast<int>(h), static_cast<int>(w)},
                            std::move(data));
    const int label = labels[8 + i];
    if (label >= class_count)
      throw ParseError("idx labels: label " + std::to_string(label) + " at byte offset " +
                       std::to_string(8 + i) + " outside class range");
    ds.labels.push_back(label);
  }
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int class_count) {
  Dataset ds = parse_idx(read_file(images_path), read_file(labels_path), class_count);
  ds.name = images_path;
  return ds;
}

Dataset preprocess_fashion(const Dataset& ds, int target_hw, int bits) {
  if (bits < 1 || bits > 16) throw ArgumentError("preprocess_fashion: bits must lie in [1,16]");
  Dataset out;
  out.name = ds.name;
  out.class_count = ds.class_count;
  out.labels = ds.labels;
  const double levels = std::ldexp(1.0, bits);
  for (const Tensor& s : ds.samples) {
    if (s.rank() != 3 || s.dim(0) != 1 || s.dim(1) != s.dim(2))
      throw DimensionError("preprocess_fashion: expected square (1,H,W) input, got " + s.shape_str());
    const int hw = s.dim(1);
    if (hw != 2 * target_hw)
      throw DimensionError("preprocess_fashion: " + std::to_string(hw) +
                           " cannot be 2x2-pooled to " + std::to_string(target_hw));
    Tensor t({1, target_hw, target_hw});
    for (int i = 0; i < target_hw; ++i)
      for (int j = 0; j < target_hw; ++j) {
        const double m = (s[(2 * i) * hw + 2 * j] + s[(2 * i) * hw + 2 * j + 1] +
                          s[(2 * i + 1) * hw + 2 * j] + s[(2 * i + 1) * hw + 2 * j + 1]) /
                         4.0;
        const double level = std::min(std::floor(m * levels), levels - 1.0);
        t[static_cast<std::size_t>(i) * target_hw + j] = std::max(level, 0.0) / levels;
      }
    out.samples.push_back(std::move(t));
  }
  return out;
}

Dataset parse_feature_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("feature csv: missing header at line 1");
  int h = 0, w = 0, classes = 0;
  {
    std::istringstream hs(line);
    char c1 = 0, c2 = 0;
    if (!(hs >> h >> c1 >> w >> c2 >> classes) || c1 != ',' || c2 != ',' || h < 1 || w < 1 ||
        classes < 1)
      throw ParseError("feature csv: bad header '" + line + "' at line 1, expected H,W,classes");
  }
  Dataset ds;
  ds.name = "features";
  ds.class_count = classes;
  const std::size_t expected = static_cast<std::size_t>(h) * w;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> values;
    int label = -1;
    std::size_t col = 0;
    while (std::getline(ls, cell, ',')) {
      ++col;
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
        if (col == 1) {
          if (v != std::floor(v) || v < 0 || v >= classes)
            throw ParseError("feature csv: invalid label '" + cell + "' at line " +
                             std::to_string(line_no) + ", column 1");
          label = static_cast<int>(v);
        } else {
          values.push_back(v);
        }
      } catch (const std::logic_error&) {
        throw ParseError("feature csv: non-numeric value '" + cell + "' at line " +
                         std::to_string(line_no) + ", column " + std::to_string(col));
      }
    }
    if (values.size() != expected)
      throw ParseError("feature csv: line " + std::to_string(line_no) + " has " +
                       std::to_string(values.size()) + " features, expected " +
                       std::to_string(expected));
    ds.samples.emplace_back(std::vector<int>{1, h, w}, std::move(values));
    ds.labels.push_back(label);
  }
  return ds;
}

Dataset load_feature_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingInputError("cannot open " + path);
  Dataset ds = parse_feature_csv(is);
  ds.name = path;
  return ds;
}

void write_feature_csv(std::ostream& os, const Dataset& ds) {
  if (ds.samples.empty()) throw ArgumentError("write_feature_csv: empty dataset has no shape");
  const Tensor& s0 = ds.samples.front();
  const int h = s0.rank() == 3 ? s0.dim(1) : 1;
  const int w = static_cast<int>(s0.size()) / h;
  os << h << ',' << w << ',' << ds.class_count << '\n';
  os << std::setprecision(6);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.labels[i];
    for (double v : ds.samples[i].data()) os << ',' << v;
    os << '\n';
  }
}

Dataset synth_blobs(int classes, int per_class, const std::vector<int>& shape, double separation,
                    std::uint64_t seed, double noise) {
  if (!(separation > 0)) throw ArgumentError("synth_blobs: separation must be positive");
  if (classes < 1 || per_class < 0) throw ArgumentError("synth_blobs: bad class counts");
  const std::size_t dim = shape_numel(shape);
  Rng rng(mix_seed(seed));
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> protos(classes, std::vector<double>(dim));
  for (auto& p : protos) {
    double norm = 0.0;
    for (double& v : p) {
      v = unit(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : p) v *= separation / norm;
  }
  Dataset ds;
  ds.name = "synth_blobs";
  ds.class_count = classes;
  for (int i = 0; i < per_class; ++i)
    for (int c = 0; c < classes; ++c) {
      std::vector<double> x(dim);
      for (std::size_t k = 0; k < dim; ++k) x[k] = protos[c][k] + noise * unit(rng);
      ds.samples.emplace_back(shape, std::move(x));
      ds.labels.push_back(c);
    }
  return ds;
}

Splits split(const Dataset& ds, std::size_t train_n, std::size_t val_n, std::size_t test_n,
             std::uint64_t seed) {
  if (train_n + val_n + test_n > ds.size())
    throw ArgumentError("split: requested " + std::to_string(train_n + val_n + test_n) +
                        " samples from a dataset of " + std::to_string(ds.size()));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed));
  // Fisher-Yates with an explicit draw keeps the permutation library-independent.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  auto take = [&](std::size_t from, std::size_t n, const char* tag) {
    Dataset out;
    out.name = ds.name + ":" + tag;
    out.class_count = ds.class_count;
    for (std::size_t k = from; k < from + n; ++k) {
      out.samples.push_back(ds.samples[order[k]]);
      out.labels.push_back(ds.labels[order[k]]);
    }
    return out;
  };
  return {take(0, train_n, "train"), take(train_n, val_n, "val"),
          take(train_n + val_n, test_n, "test")};
}

}  // namespace rmtopo
