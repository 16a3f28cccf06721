#include "foml/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "foml/error.hpp"
#include "foml/rng.hpp"

namespace foml {

std::size_t Dataset::num_classes() const {
  int mx = -1;
  for (int y : labels) mx = std::max(mx, y);
  return static_cast<std::size_t>(mx + 1);
}

void Dataset::push(std::span<const double> image, int label) {
  if (image.size() != item_size()) throw ShapeError("dataset item has wrong size");
  pixels.insert(pixels.end(), image.begin(), image.end());
  labels.push_back(label);
}

namespace {

constexpr std::size_t kSide = 8;
constexpr std::uint64_t kGlyphPatternSeed = 0x676c797068ULL;

using Glyph = std::vector<double>;

// Patterns live on a 4x4 grid of 2x2 blocks, so a half-scale copy still shows
// the whole pattern.
constexpr std::size_t kCoarse = kSide / 2;

Glyph random_blocks(Rng& rng) {
  std::vector<int> cells(kCoarse * kCoarse, 0);
  const std::size_t on = 6 + static_cast<std::size_t>(rng.below(3));
  for (std::size_t i = 0; i < on; ++i) cells[i] = 1;
  rng.shuffle(cells);
  Glyph g(kSide * kSide, 0.0);
  for (std::size_t y = 0; y < kSide; ++y)
    for (std::size_t x = 0; x < kSide; ++x) g[y * kSide + x] = cells[(y / 2) * kCoarse + x / 2];
  return g;
}

double hamming(const Glyph& a, const Glyph& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] > 0.5) != (b[i] > 0.5);
  return d;
}

std::vector<Glyph> glyph_patterns(std::size_t num_classes) {
  Rng rng(kGlyphPatternSeed);
  std::vector<Glyph> patterns;
  while (patterns.size() < num_classes) {
    Glyph g = random_blocks(rng);
    bool distinct = true;
    // 16 pixels is four differing blocks.
    for (const auto& p : patterns)
      if (hamming(g, p) < 16) distinct = false;
    if (distinct) patterns.push_back(std::move(g));
  }
  return patterns;
}

}  // namespace

Dataset make_glyph_dataset(std::size_t items_per_class, std::uint64_t seed, std::size_t num_classes) {
  if (num_classes < 2) throw ConfigError("glyph dataset needs at least 2 classes");
  const auto patterns = glyph_patterns(num_classes);
  Rng rng(seed);
  Dataset d;
  d.channels = 1;
  d.height = kSide;
  d.width = kSide;
  Glyph img(kSide * kSide);
  for (std::size_t i = 0; i < items_per_class; ++i)
    for (std::size_t c = 0; c < num_classes; ++c) {
      const int dx = rng.uniform() < 0.3 ? static_cast<int>(rng.below(3)) - 1 : 0;
      const int dy = rng.uniform() < 0.3 ? static_cast<int>(rng.below(3)) - 1 : 0;
      const double intensity = rng.uniform(0.7, 1.0);
      for (std::size_t y = 0; y < kSide; ++y)
        for (std::size_t x = 0; x < kSide; ++x) {
          const int sy = static_cast<int>(y) - dy, sx = static_cast<int>(x) - dx;
          double v = 0.0;
          if (sy >= 0 && sx >= 0 && sy < static_cast<int>(kSide) && sx < static_cast<int>(kSide))
            v = patterns[c][static_cast<std::size_t>(sy) * kSide + static_cast<std::size_t>(sx)] * intensity;
          if (v > 0 && rng.uniform() < 0.05) v = 0.0;
          v += 0.05 * rng.normal();
          img[y * kSide + x] = std::clamp(v, 0.0, 1.0);
        }
      d.push(img, static_cast<int>(c));
    }
  return d;
}

namespace {

constexpr const char* kMagic = "FOMLDS";

void write_le(std::ostream& os, const void* p, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  } else {
    const char* c = static_cast<const char*>(p);
    for (std::size_t i = n; i-- > 0;) os.put(c[i]);
  }
}

void read_le(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("dataset file truncated");
  if constexpr (std::endian::native != std::endian::little) std::reverse(static_cast<char*>(p), static_cast<char*>(p) + n);
}

bool is_csv(const std::filesystem::path& path) { return path.extension() == ".csv"; }

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write dataset file " + path.string());
  os << kMagic << " v1 " << data.size() << ' ' << data.height << ' ' << data.width << ' ' << data.channels << '\n';
  if (is_csv(path)) {
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
      os << data.labels[i];
      for (double v : data.image(i)) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        os << buf;
      }
      os << '\n';
    }
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::int32_t label = data.labels[i];
      write_le(os, &label, sizeof label);
      for (double v : data.image(i)) write_le(os, &v, sizeof v);
    }
  }
  if (!os) throw Error("failed writing dataset file " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open dataset file " + path.string());
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string magic, version;
  long long n = -1, h = -1, w = -1, c = -1;
  hs >> magic >> version >> n >> h >> w >> c;
  if (magic != kMagic) throw FormatError("not a FOMLDS file: bad magic in " + path.string());
  if (version != "v1") throw FormatError("unsupported FOMLDS version '" + version + "'");
  if (!hs || n < 0 || h <= 0 || w <= 0 || c <= 0) throw FormatError("malformed FOMLDS header: '" + header + "'");
  std::string rest;
  if (hs >> rest) throw FormatError("trailing tokens in FOMLDS header: '" + header + "'");
  Dataset d;
  d.height = static_cast<std::size_t>(h);
  d.width = static_cast<std::size_t>(w);
  d.channels = static_cast<std::size_t>(c);
  const std::size_t item = d.item_size();
  d.pixels.reserve(static_cast<std::size_t>(n) * item);
  std::vector<double> img(item);
  if (is_csv(path)) {
    std::string line;
    for (long long i = 0; i < n; ++i) {
      if (!std::getline(is, line)) throw FormatError("dataset has fewer rows than its header declares");
      std::istringstream ls(line);
      std::string tok;
      if (!std::getline(ls, tok, ',')) throw FormatError("empty CSV row");
      const int label = std::stoi(tok);
      for (std::size_t k = 0; k < item; ++k) {
        if (!std::getline(ls, tok, ',')) throw FormatError("CSV row " + std::to_string(i) + " has too few pixels");
        img[k] = std::stod(tok);
      }
      if (std::getline(ls, tok, ',')) throw FormatError("CSV row " + std::to_string(i) + " has too many pixels");
      d.push(img, label);
    }
    while (std::getline(is, line))
      if (!line.empty()) throw FormatError("dataset has more rows than its header declares");
  } else {
    for (long long i = 0; i < n; ++i) {
      std::int32_t label;
      read_le(is, &label, sizeof label);
      for (std::size_t k = 0; k < item; ++k) read_le(is, &img[k], sizeof(double));
      d.push(img, label);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("dataset has trailing bytes");
  }
  for (int y : d.labels)
    if (y < 0) throw FormatError("negative label in dataset");
  return d;
}

namespace {

std::uint32_t read_be32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("IDX file truncated");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t target_side) {
  std::ifstream im(images, std::ios::binary), lb(labels, std::ios::binary);
  if (!im) throw Error("cannot open " + images.string());
  if (!lb) throw Error("cannot open " + labels.string());
  if (read_be32(im) != 0x00000803) throw FormatError("bad IDX image magic in " + images.string());
  if (read_be32(lb) != 0x00000801) throw FormatError("bad IDX label magic in " + labels.string());
  const std::size_t n = read_be32(im), rows = read_be32(im), cols = read_be32(im);
  if (read_be32(lb) != n) throw FormatError("IDX image and label counts differ");
  Dataset d;
  d.channels = 1;
  d.height = rows;
  d.width = cols;
  std::vector<unsigned char> raw(rows * cols);
  std::vector<double> img(rows * cols);
  for (std::size_t i = 0; i < n; ++i) {
    im.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    char y;
    lb.read(&y, 1);
    if (!im || !lb) throw FormatError("IDX file truncated");
    for (std::size_t k = 0; k < raw.size(); ++k) img[k] = raw[k] / 255.0;
    d.push(img, static_cast<unsigned char>(y));
  }
  if (target_side && (target_side != rows || target_side != cols)) return resize_area(d, target_side, target_side);
  return d;
}

Dataset resize_area(const Dataset& data, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("resize target must be positive");
  Dataset out;
  out.channels = data.channels;
  out.height = height;
  out.width = width;
  const double sy = static_cast<double>(data.height) / static_cast<double>(height);
  const double sx = static_cast<double>(data.width) / static_cast<double>(width);
  std::vector<double> img(out.item_size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto src = data.image(i);
    for (std::size_t c = 0; c < data.channels; ++c)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          const double y0 = y * sy, y1 = (y + 1) * sy, x0 = x * sx, x1 = (x + 1) * sx;
          double acc = 0.0;
          for (auto r = static_cast<std::size_t>(y0); r < data.height && static_cast<double>(r) < y1; ++r) {
            const double wy = std::min<double>(r + 1, y1) - std::max<double>(r, y0);
            for (auto q = static_cast<std::size_t>(x0); q < data.width && static_cast<double>(q) < x1; ++q) {
              const double wx = std::min<double>(q + 1, x1) - std::max<double>(q, x0);
              acc += wy * wx * src[(c * data.height + r) * data.width + q];
            }
          }
          img[(c * height + y) * width + x] = acc / (sy * sx);
        }
    out.push(img, data.labels[i]);
  }
  return out;
}

}  // namespace foml
