#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gibbs/tensor.hpp"

namespace gibbs {

/// Decoded IDX file: unsigned-byte payload with its big-endian dimension header.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

/// Reads plain or gzip-compressed IDX; only the unsigned-byte element type is accepted.
IdxArray read_idx_raw(const std::string& path);
void write_idx(const std::string& path, const IdxArray& idx);

/// Image files (rank 3) become [count, rows*cols] scaled by 1/255; other ranks keep raw byte
/// values with their shape.
Tensor read_idx(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);

struct Dataset {
  Tensor images;  // [P, N] in [0, 1]
  std::vector<int> labels;
  std::string split;
  std::size_t side = 0;  // images are side x side

  std::size_t size() const { return labels.size(); }
};

/// Loads `split` ("train" or "test") from a directory holding the four MNIST IDX files
/// (optionally .gz). `limit` keeps the first observations only.
Dataset load_mnist(const std::string& dir, const std::string& split,
                   std::optional<std::size_t> limit = std::nullopt);
bool mnist_available(const std::string& dir);

enum class Binarization { Threshold, Stochastic };

std::string to_string(Binarization mode);
Binarization parse_binarization(const std::string& name);

/// {0,1} images: pixel > 0.5, or one Bernoulli(pixel) draw per pixel from `seed`.
Tensor binarize(const Tensor& images, Binarization mode, std::uint64_t seed = 0);

/// Fisher-Yates with the project RNG, identical on every platform.
void shuffle(std::vector<std::size_t>& v, Rng& rng);

/// Index lists of one epoch: shuffled from (seed, epoch), final short batch kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices);
std::vector<Batch> batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                           std::size_t epoch);
Dataset subset(const Dataset& data, std::size_t begin, std::size_t end);

/// Small labeled image set: each class is a distinct noisy stroke pattern on a side x side grid.
Dataset synthetic_dataset(std::size_t count, std::size_t side, std::size_t classes, std::uint64_t seed);

/// Binary PGM (P5) grid of `images` rows, each side x side with values in [0, 1].
void write_pgm_grid(const std::string& path, const Tensor& images, std::size_t side, std::size_t columns);

}  // namespace gibbs
