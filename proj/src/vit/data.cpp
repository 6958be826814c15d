#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "mrsim/vit/tiny_vit.hpp"

namespace mrsim::vit {

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset d;
  d.image_size = image_size;
  d.channels = channels;
  d.n_classes = n_classes;
  d.images.resize(static_cast<Eigen::Index>(rows.size()), images.cols());
  d.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(size())) {
      throw ShapeError("Dataset::subset: row index out of range");
    }
    d.images.row(static_cast<Eigen::Index>(i)) = images.row(static_cast<Eigen::Index>(rows[i]));
    d.labels.push_back(labels[rows[i]]);
  }
  return d;
}

Dataset make_synthetic_dataset(const SeedContext& ctx, const SyntheticSpec& spec) {
  if (spec.n_classes < 2 || spec.n_per_class <= 0 || spec.image_size <= 0 ||
      spec.blob_width <= 0.0 || spec.pixel_noise < 0.0 || spec.position_jitter < 0.0) {
    throw ParameterError("SyntheticSpec: invalid sizes or widths");
  }
  const int S = spec.image_size;
  const int n = spec.n_classes * spec.n_per_class;
  Dataset d;
  d.image_size = S;
  d.channels = 1;
  d.n_classes = spec.n_classes;
  d.images.resize(n, S * S);
  d.labels.resize(static_cast<std::size_t>(n));
  const double centre = 0.5 * (S - 1);
  const double radius = 0.25 * S;
  const double inv2w2 = 1.0 / (2.0 * spec.blob_width * spec.blob_width);
  for (int i = 0; i < n; ++i) {
    const int c = i % spec.n_classes;
    const RandomStream rs(ctx.child("sample", static_cast<std::uint64_t>(i)));
    const double angle = 2.0 * std::numbers::pi * c / spec.n_classes;
    const double cy = centre + radius * std::sin(angle) + spec.position_jitter * rs.normal(0);
    const double cx = centre + radius * std::cos(angle) + spec.position_jitter * rs.normal(1);
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const auto p = static_cast<std::uint64_t>(y * S + x);
        d.images(i, y * S + x) =
            spec.separation * std::exp(-r2 * inv2w2) + spec.pixel_noise * rs.normal(2 + p);
      }
    }
    d.labels[static_cast<std::size_t>(i)] = c;
  }
  return d;
}

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    out << ds.labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < ds.images.cols(); ++c) {
      out << ',' << ds.images(r, c);
    }
    out << '\n';
  }
  if (!out) {
    throw FormatError("write failed: " + path.string());
  }
}

Dataset load_dataset_csv(const std::filesystem::path& path, int image_size, int channels,
                         int n_classes) {
  if (image_size <= 0 || channels <= 0) {
    throw ParameterError("load_dataset_csv: image_size and channels must be positive");
  }
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  const auto pixels = static_cast<std::size_t>(channels * image_size * image_size);
  std::vector<double> values;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::size_t fields = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t next = line.find(',', pos);
      if (next == std::string::npos) {
        next = line.size();
      }
      const char* first = line.data() + pos;
      const char* last = line.data() + next;
      if (fields == 0) {
        int label = 0;
        auto [p, ec] = std::from_chars(first, last, label);
        if (ec != std::errc{} || p != last || label < 0) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad label");
        }
        labels.push_back(label);
        max_label = std::max(max_label, label);
      } else {
        double v = 0.0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || p != last || !std::isfinite(v)) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad value");
        }
        values.push_back(v);
      }
      ++fields;
      pos = next + 1;
    }
    if (fields != pixels + 1) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(pixels + 1) + " fields, got " + std::to_string(fields));
    }
  }
  Dataset d;
  d.image_size = image_size;
  d.channels = channels;
  d.n_classes = n_classes > 0 ? n_classes : max_label + 1;
  if (max_label >= d.n_classes) {
    throw FormatError(path.string() + ": label " + std::to_string(max_label) +
                      " outside n_classes");
  }
  d.labels = std::move(labels);
  d.images = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(d.labels.size()),
                                      static_cast<Eigen::Index>(pixels));
  return d;
}

} // namespace mrsim::vit
