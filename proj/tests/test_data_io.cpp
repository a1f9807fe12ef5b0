#include <doctest.h>

#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "gibbs/data_io.hpp"
#include "gibbs/error.hpp"

using namespace gibbs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& n) const { return (path / n).string(); }
};

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("handcrafted image file") {
  TempDir t("gibbs_idx_img");
  write_bytes(t.file("img"), {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 51, 102, 1, 2, 3, 4});
  const Tensor x = read_idx(t.file("img"));
  CHECK(x.shape() == Shape{2, 4});
  CHECK(x[0] == 0.0);
  CHECK(x[1] == 1.0);
  CHECK(x[2] == doctest::Approx(0.2));
  CHECK(x[7] == doctest::Approx(4.0 / 255));
}

TEST_CASE("handcrafted label file") {
  TempDir t("gibbs_idx_lbl");
  write_bytes(t.file("lbl"), {0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9});
  CHECK(read_idx_labels(t.file("lbl")) == std::vector<int>{7, 0, 9});
}

TEST_CASE("malformed files") {
  TempDir t("gibbs_idx_bad");
  write_bytes(t.file("empty"), {});
  CHECK_THROWS_AS(read_idx_raw(t.file("empty")), ParseError);
  write_bytes(t.file("magic"), {1, 0, 8, 1, 0, 0, 0, 1, 5});
  CHECK_THROWS_AS(read_idx_raw(t.file("magic")), ParseError);
  write_bytes(t.file("short"), {0, 0, 8, 1, 0, 0, 0, 4, 5, 6});
  try {
    read_idx_raw(t.file("short"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("at byte") != std::string::npos);
  }
  write_bytes(t.file("float"), {0, 0, 0x0D, 1, 0, 0, 0, 1, 0, 0, 0, 0});
  CHECK_THROWS_AS(read_idx_raw(t.file("float")), ParseError);
  CHECK_THROWS(read_idx_raw(t.file("missing")));
}

TEST_CASE("write and read are byte-identical") {
  TempDir t("gibbs_idx_rt");
  const std::vector<unsigned char> bytes = {0, 0, 8, 2, 0, 0, 0, 2, 0, 0, 0, 3, 1, 2, 3, 4, 5, 6};
  write_bytes(t.file("a"), bytes);
  write_idx(t.file("b"), read_idx_raw(t.file("a")));
  CHECK(read_bytes(t.file("b")) == bytes);
}

TEST_CASE("gzip files are read transparently") {
  TempDir t("gibbs_idx_gz");
  const std::vector<unsigned char> bytes = {0, 0, 8, 1, 0, 0, 0, 2, 4, 2};
  gzFile gz = gzopen(t.file("l.gz").c_str(), "wb");
  REQUIRE(gz);
  gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(gz);
  CHECK(read_idx_labels(t.file("l.gz")) == std::vector<int>{4, 2});
}

TEST_CASE("MNIST directory loading") {
  TempDir t("gibbs_mnist_dir");
  write_bytes(t.file("t10k-images-idx3-ubyte"), {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 51, 102, 1, 2, 3, 4});
  write_bytes(t.file("t10k-labels-idx1-ubyte"), {0, 0, 8, 1, 0, 0, 0, 2, 3, 8});
  CHECK(!mnist_available(t.path.string()));
  const Dataset d = load_mnist(t.path.string(), "test");
  CHECK(d.size() == 2);
  CHECK(d.side == 2);
  CHECK(d.labels == std::vector<int>{3, 8});
  CHECK(load_mnist(t.path.string(), "test", 1).size() == 1);
  CHECK_THROWS_AS(load_mnist(t.path.string(), "train"), ParseError);
  write_bytes(t.file("t10k-labels-idx1-ubyte"), {0, 0, 8, 1, 0, 0, 0, 1, 3});
  CHECK_THROWS_AS(load_mnist(t.path.string(), "test"), ParseError);
}

TEST_CASE("binarization") {
  const Tensor grey({2, 3}, 0.3);
  CHECK(binarize(grey, Binarization::Threshold) == Tensor({2, 3}));
  const Tensor bin({2, 3}, {0, 1, 1, 0, 0, 1});
  CHECK(binarize(bin, Binarization::Threshold) == bin);
  const Tensor big({50, 40}, 0.5);
  const Tensor s1 = binarize(big, Binarization::Stochastic, 7), s2 = binarize(big, Binarization::Stochastic, 7);
  CHECK(s1 == s2);
  double mean = 0.0;
  for (double v : s1.data()) {
    CHECK((v == 0.0 || v == 1.0));
    mean += v;
  }
  CHECK(std::abs(mean / s1.size() - 0.5) < 0.05);
  CHECK(binarize(bin, Binarization::Stochastic, 3) == bin);
  CHECK_THROWS_AS(binarize(Tensor({1, 2}, 1.5), Binarization::Threshold), DomainError);
  CHECK(parse_binarization("stochastic") == Binarization::Stochastic);
}

TEST_CASE("every observation appears once per epoch") {
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    const auto plan = batch_indices(103, 10, 5, epoch);
    CHECK(plan.size() == 11);
    CHECK(plan.back().size() == 3);
    std::multiset<std::size_t> seen;
    for (const auto& b : plan) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 103);
    for (std::size_t i = 0; i < 103; ++i) CHECK(seen.count(i) == 1);
  }
  CHECK(batch_indices(50, 7, 1, 0) == batch_indices(50, 7, 1, 0));
  CHECK(batch_indices(50, 7, 1, 0) != batch_indices(50, 7, 1, 1));
}

TEST_CASE("batches, subsets and synthetic data") {
  const Dataset d = synthetic_dataset(40, 6, 4, 9);
  CHECK(d.images.shape() == Shape{40, 36});
  CHECK(d.side == 6);
  for (int l : d.labels) CHECK((l >= 0 && l < 4));
  const Batch b = make_batch(d, {3, 1});
  CHECK(b.labels == std::vector<int>{d.labels[3], d.labels[1]});
  for (std::size_t j = 0; j < 36; ++j) CHECK(b.images.at(0, j) == d.images.at(3, j));
  const Dataset s = subset(d, 10, 20);
  CHECK(s.size() == 10);
  CHECK(s.labels[0] == d.labels[10]);
  std::size_t rows = 0;
  for (const auto& bb : batches(d, 16, 2, 0)) rows += bb.labels.size();
  CHECK(rows == 40);
}

TEST_CASE("PGM grid") {
  TempDir t("gibbs_pgm");
  const Tensor imgs({3, 4}, 1.0);
  write_pgm_grid(t.file("g.pgm"), imgs, 2, 2);
  const auto bytes = read_bytes(t.file("g.pgm"));
  const std::string head(bytes.begin(), bytes.begin() + 2);
  CHECK(head == "P5");
}
