#include <stdexcept>
#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "scl/data.hpp"
#include "scl/rng.hpp"
#include "test_util.hpp"

using namespace scl;

TEST_SUITE("data") {

TEST_CASE("idx round trip reproduces the input bytes") {
  IdxData idx;
  idx.dtype = 0x08;
  idx.dims = {3, 2, 2};
  idx.bytes = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 255};
  const std::string path = "idx_roundtrip.tmp";
  write_idx(path, idx);
  const std::string original = slurp(path);

  IdxData parsed = read_idx(path);
  CHECK(parsed.dims == idx.dims);
  CHECK(parsed.bytes == idx.bytes);

  const std::string again = path + ".2";
  write_idx(again, parsed);
  CHECK(slurp(again) == original);
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_CASE("idx parse errors name the offset") {
  const std::string path = "idx_bad.tmp";
  {
    std::ofstream out(path, std::ios::binary);
    const char bad[] = {1, 2, 3, 4};
    out.write(bad, 4);
  }
  try {
    read_idx(path);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
  }
  std::filesystem::remove(path);

  // truncated payload
  IdxData idx;
  idx.dtype = 0x08;
  idx.dims = {4};
  idx.bytes = {1, 2, 3, 4};
  write_idx(path, idx);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
  }
  std::filesystem::resize_file(path, 10);  // header 8 + 2 of 4 payload bytes
  CHECK_THROWS_WITH_AS(read_idx(path), doctest::Contains("truncated"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("mnist loads with the documented sizes and magics" * doctest::skip(mnist_dir_or_empty().empty())) {
  const std::string dir = mnist_dir_or_empty();
  MnistData data = load_mnist_dir(dir);
  CHECK(data.train.images.shape == std::vector<int64_t>{60000, 784});
  CHECK(data.test.images.shape == std::vector<int64_t>{10000, 784});
  CHECK(data.train.labels.size() == 60000);
  CHECK(data.test.labels.size() == 10000);
  for (int label : data.test.labels) {
    CHECK(label >= 0);
    CHECK(label <= 9);
  }

  // standardized with the training moments
  double sum = 0.0;
  for (float v : data.train.images.data) sum += v;
  const double mean = sum / static_cast<double>(data.train.images.data.size());
  double sq = 0.0;
  for (float v : data.train.images.data) sq += (v - mean) * (v - mean);
  const double stddev = std::sqrt(sq / static_cast<double>(data.train.images.data.size()));
  CHECK(std::fabs(mean) < 1e-3);
  CHECK(std::fabs(stddev - 1.0) < 1e-3);

  // the canonical single-channel moments, recomputed rather than hard-coded
  CHECK(data.moments.mean == doctest::Approx(0.1307).epsilon(1e-2));
  CHECK(data.moments.stddev == doctest::Approx(0.3081).epsilon(1e-2));
}

TEST_CASE("gzip variant parses identically" * doctest::skip(mnist_dir_or_empty().empty())) {
  const std::string dir = mnist_dir_or_empty();
  if (!std::filesystem::exists(dir + "/t10k-images-idx3-ubyte.gz")) return;
  IdxData plain = read_idx(dir + "/t10k-images-idx3-ubyte");
  IdxData gz = read_idx(dir + "/t10k-images-idx3-ubyte.gz");
  CHECK(plain.dims == gz.dims);
  CHECK(plain.bytes == gz.bytes);
}

TEST_CASE("standardization is invertible") {
  Rng rng(3);
  Tensor images({100, 7});
  for (float& v : images.data) v = rng.uniform();
  Tensor original = images;
  Moments m = compute_moments(images);
  standardize_inplace(images, m);
  for (size_t i = 0; i < images.data.size(); ++i) {
    const float back = images.data[i] * m.stddev + m.mean;
    CHECK(std::fabs(back - original.data[i]) < 1e-6f);
  }
}

TEST_CASE("batch layout: 60000 at 64 gives 938 batches ending in 32") {
  auto b = batches(60000, 64, 1, 0);
  CHECK(b.size() == 938);
  CHECK(b.front().size() == 64);
  CHECK(b.back().size() == 32);
}

TEST_CASE("batches are deterministic in (seed, epoch) and cover the set exactly once") {
  auto a = batches(1000, 32, 5, 3);
  auto b = batches(1000, 32, 5, 3);
  CHECK(a == b);
  auto c = batches(1000, 32, 5, 4);
  CHECK(a != c);
  auto d = batches(1000, 32, 6, 3);
  CHECK(a != d);

  std::vector<int> seen(1000, 0);
  for (const auto& batch : a)
    for (int32_t i : batch) seen[static_cast<size_t>(i)] += 1;
  for (int count : seen) CHECK(count == 1);
}

TEST_CASE("gather_rows picks the right rows") {
  Tensor images({4, 2}, {0, 1, 10, 11, 20, 21, 30, 31});
  Tensor picked = gather_rows(images, {2, 0});
  CHECK(picked.data == std::vector<float>{20, 21, 0, 1});
  CHECK(gather_labels({5, 6, 7, 8}, {2, 0}) == std::vector<int>{7, 5});
}

TEST_CASE("mapping inputs are standard normal and deterministic") {
  Tensor a = gen_mapping_inputs(1000, 100, 9);
  Tensor b = gen_mapping_inputs(1000, 100, 9);
  CHECK(a.data == b.data);
  CHECK(a.shape == std::vector<int64_t>{1000, 100});

  double sum = 0.0;
  for (float v : a.data) sum += v;
  CHECK(std::fabs(sum / 1e5) < 0.01);

  // Kolmogorov-Smirnov against the standard normal CDF
  std::vector<float> sorted(a.data);
  std::sort(sorted.begin(), sorted.end());
  double d_stat = 0.0;
  const double n = static_cast<double>(sorted.size());
  for (size_t i = 0; i < sorted.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-static_cast<double>(sorted[i]) / std::sqrt(2.0));
    d_stat = std::max(d_stat, std::fabs(static_cast<double>(i + 1) / n - cdf));
    d_stat = std::max(d_stat, std::fabs(cdf - static_cast<double>(i) / n));
  }
  CHECK(d_stat < 0.01);
}

}  // TEST_SUITE
