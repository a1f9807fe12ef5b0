#include "gibbs/data_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "gibbs/error.hpp"

namespace gibbs {

namespace {

class GzReader {
 public:
  explicit GzReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
    if (!file_) throw ParseError("cannot open " + path);
  }
  ~GzReader() { gzclose(file_); }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, std::size_t n, const char* what) {
    auto* p = static_cast<unsigned char*>(dst);
    std::size_t got = 0;
    while (got < n) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - got, 1u << 30));
      const int r = gzread(file_, p + got, chunk);
      if (r < 0) throw ParseError(path_ + ": decompression error at byte " + std::to_string(offset_ + got));
      if (r == 0)
        throw ParseError(path_ + ": truncated " + what + " at byte " + std::to_string(offset_ + got) +
                         " (needed " + std::to_string(n - got) + " more bytes)");
      got += static_cast<std::size_t>(r);
    }
    offset_ += n;
  }

  std::uint32_t be32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

  bool at_end() {
    unsigned char c;
    return gzread(file_, &c, 1) == 0;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::string path_;
  gzFile file_;
  std::size_t offset_ = 0;
};

std::string find_file(const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  for (const std::string& name : {stem, stem + ".gz"}) {
    const fs::path p = fs::path(dir) / name;
    if (fs::exists(p)) return p.string();
  }
  // Some mirrors name the files with a dot before idx.
  std::string dotted = stem;
  const auto pos = dotted.find("-idx");
  if (pos != std::string::npos) dotted[pos] = '.';
  for (const std::string& name : {dotted, dotted + ".gz"}) {
    const fs::path p = fs::path(dir) / name;
    if (fs::exists(p)) return p.string();
  }
  throw ParseError("missing " + stem + " in " + dir);
}

}  // namespace

IdxArray read_idx_raw(const std::string& path) {
  GzReader in(path);
  unsigned char magic[4];
  in.read(magic, 4, "magic number");
  if (magic[0] != 0 || magic[1] != 0)
    throw ParseError(path + ": bad magic at byte 0 (not an IDX file)");
  if (magic[2] != 0x08)
    throw ParseError(path + ": unsupported element type 0x" + std::to_string(magic[2]) + " at byte 2");
  const unsigned rank = magic[3];
  if (rank == 0 || rank > 4) throw ParseError(path + ": bad rank " + std::to_string(rank) + " at byte 3");
  IdxArray idx;
  std::size_t total = 1;
  for (unsigned d = 0; d < rank; ++d) {
    idx.dims.push_back(in.be32("dimension header"));
    total *= idx.dims.back();
  }
  idx.data.resize(total);
  if (total) in.read(idx.data.data(), total, "payload");
  if (!in.at_end())
    throw ParseError(path + ": trailing bytes after payload at byte " + std::to_string(in.offset()));
  return idx;
}

void write_idx(const std::string& path, const IdxArray& idx) {
  std::size_t total = 1;
  for (auto d : idx.dims) total *= d;
  if (total != idx.data.size()) throw DimensionError("write_idx: payload does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(idx.dims.size())};
  out.write(reinterpret_cast<const char*>(magic), 4);
  for (auto d : idx.dims) {
    const unsigned char b[4] = {static_cast<unsigned char>(d >> 24), static_cast<unsigned char>(d >> 16),
                                static_cast<unsigned char>(d >> 8), static_cast<unsigned char>(d)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  out.write(reinterpret_cast<const char*>(idx.data.data()), static_cast<std::streamsize>(idx.data.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Tensor read_idx(const std::string& path) {
  const IdxArray idx = read_idx_raw(path);
  if (idx.dims.size() == 3) {
    const std::size_t n = std::size_t{idx.dims[1]} * idx.dims[2];
    Tensor t({idx.dims[0], n});
    for (std::size_t i = 0; i < idx.data.size(); ++i) t[i] = idx.data[i] / 255.0;
    return t;
  }
  Shape shape(idx.dims.begin(), idx.dims.end());
  Tensor t(shape);
  for (std::size_t i = 0; i < idx.data.size(); ++i) t[i] = idx.data[i];
  return t;
}

std::vector<int> read_idx_labels(const std::string& path) {
  const IdxArray idx = read_idx_raw(path);
  if (idx.dims.size() != 1) throw ParseError(path + ": label file must have rank 1 (magic 0x00000801)");
  return {idx.data.begin(), idx.data.end()};
}

bool mnist_available(const std::string& dir) {
  try {
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                          "t10k-labels-idx1-ubyte"})
      find_file(dir, f);
    return true;
  } catch (const ParseError&) {
    return false;
  }
}

Dataset load_mnist(const std::string& dir, const std::string& split, std::optional<std::size_t> limit) {
  std::string prefix;
  if (split == "train") prefix = "train";
  else if (split == "test") prefix = "t10k";
  else throw ContractError("split must be train or test");
  const IdxArray img = read_idx_raw(find_file(dir, prefix + "-images-idx3-ubyte"));
  const std::string label_path = find_file(dir, prefix + "-labels-idx1-ubyte");
  const auto labels = read_idx_labels(label_path);
  if (img.dims.size() != 3) throw ParseError("image file must have rank 3 (magic 0x00000803)");
  if (img.dims[0] != labels.size())
    throw ParseError(label_path + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(img.dims[0]) + " images");
  if (img.dims[1] != img.dims[2]) throw ParseError("images are not square");
  const std::size_t n = std::size_t{img.dims[1]} * img.dims[2];
  const std::size_t p = limit ? std::min<std::size_t>(*limit, labels.size()) : labels.size();
  Dataset d;
  d.split = split;
  d.side = img.dims[1];
  d.images = Tensor({p, n});
  for (std::size_t i = 0; i < p * n; ++i) d.images[i] = img.data[i] / 255.0;
  d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(p));
  return d;
}

std::string to_string(Binarization mode) {
  return mode == Binarization::Threshold ? "threshold" : "stochastic";
}

Binarization parse_binarization(const std::string& name) {
  if (name == "threshold") return Binarization::Threshold;
  if (name == "stochastic") return Binarization::Stochastic;
  throw ContractError("unknown binarization '" + name + "'");
}

Tensor binarize(const Tensor& images, Binarization mode, std::uint64_t seed) {
  Tensor out(images.shape());
  Rng rng(seed);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double p = images[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw DomainError("pixel " + std::to_string(i) + " = " + std::to_string(p) + " is outside [0,1]");
    out[i] = mode == Binarization::Threshold ? (p > 0.5 ? 1.0 : 0.0) : (rng.uniform() < p ? 1.0 : 0.0);
  }
  return out;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng = Rng(seed).fork(epoch);
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < count; b += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, b + batch_size)));
  return out;
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  const std::size_t n = data.images.cols();
  Batch b{Tensor({indices.size(), n}), {}};
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = data.images.row(indices[i]);
    std::copy(src.begin(), src.end(), b.images.row(i).begin());
    b.labels.push_back(data.labels[indices[i]]);
  }
  return b;
}

std::vector<Batch> batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                           std::size_t epoch) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(data.size(), batch_size, seed, epoch))
    out.push_back(make_batch(data, idx));
  return out;
}

Dataset subset(const Dataset& data, std::size_t begin, std::size_t end) {
  end = std::min(end, data.size());
  if (begin > end) throw ContractError("subset: begin past end");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  Batch b = make_batch(data, idx);
  return {std::move(b.images), std::move(b.labels), data.split, data.side};
}

Dataset synthetic_dataset(std::size_t count, std::size_t side, std::size_t classes, std::uint64_t seed) {
  if (side < 4 || classes == 0) throw ContractError("synthetic_dataset: side >= 4 and classes >= 1");
  Rng rng(seed);
  Dataset d;
  d.split = "synthetic";
  d.side = side;
  d.images = Tensor({count, side * side});
  d.labels.resize(count);
  const double c = (static_cast<double>(side) + 1.0) / 2.0;
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng.below(classes));
    d.labels[i] = label;
    // A thick line through the center at a class-specific angle, slightly jittered.
    const double angle = 3.14159265358979 * (static_cast<double>(label) + 0.5) / static_cast<double>(classes) +
                         0.15 * (rng.uniform() - 0.5);
    const double ox = (rng.uniform() - 0.5) * 2.0, oy = (rng.uniform() - 0.5) * 2.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double half = 0.35 * static_cast<double>(side);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t col = 0; col < side; ++col) {
        const double x = static_cast<double>(col + 1) - c - ox;
        const double y = static_cast<double>(r + 1) - c - oy;
        const double along = x * ca + y * sa;
        const double across = -x * sa + y * ca;
        double v = std::exp(-0.5 * across * across / 0.8);
        if (std::abs(along) > half) v *= std::exp(-(std::abs(along) - half));
        v = std::clamp(v + 0.05 * (rng.uniform() - 0.5), 0.0, 1.0);
        d.images.at(i, r * side + col) = v;
      }
  }
  return d;
}

void write_pgm_grid(const std::string& path, const Tensor& images, std::size_t side, std::size_t columns) {
  if (images.rank() != 2 || images.cols() != side * side)
    throw DimensionError("write_pgm_grid: images must be [K, side*side]");
  if (columns == 0) throw ContractError("write_pgm_grid: columns must be positive");
  const std::size_t k = images.rows();
  const std::size_t rows = (k + columns - 1) / columns;
  const std::size_t width = columns * (side + 1) + 1, height = rows * (side + 1) + 1;
  std::vector<unsigned char> pix(width * height, 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t gx = (i % columns) * (side + 1) + 1, gy = (i / columns) * (side + 1) + 1;
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        const double v = std::clamp(images.at(i, r * side + c), 0.0, 1.0);
        pix[(gy + r) * width + gx + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace gibbs
