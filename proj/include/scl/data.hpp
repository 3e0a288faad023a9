#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scl/tensor.hpp"

namespace scl {

// IDX container (big-endian header, raw payload). Gzip-compressed files are
// accepted transparently; offsets in error messages refer to the
// decompressed stream.
struct IdxData {
  uint8_t dtype = 0;
  std::vector<int64_t> dims;
  std::vector<uint8_t> bytes;
};

IdxData read_idx(const std::string& path);
void write_idx(const std::string& path, const IdxData& idx);

struct MnistSplit {
  Tensor images;  // N x 784
  std::vector<int> labels;
};

// Parses one images/labels pair. Pixels are scaled to [0,1]; standardization
// is applied separately so test data can reuse the training statistics.
MnistSplit load_mnist_idx(const std::string& images_path, const std::string& labels_path);

struct Moments {
  float mean = 0.0f;
  float stddev = 1.0f;
};

Moments compute_moments(const Tensor& images);
void standardize_inplace(Tensor& images, const Moments& m);

struct MnistData {
  MnistSplit train;
  MnistSplit test;
  Moments moments;  // from the training split
};

// Loads train + test from a directory laid out like the MNIST distribution
// (train-images-idx3-ubyte[.gz], ...), standardizing both splits with the
// training moments.
MnistData load_mnist_dir(const std::string& dir);

// Standard-normal inputs for the map-fitting experiment.
Tensor gen_mapping_inputs(int64_t n, int64_t dim, uint64_t seed);

// Shuffled index order for one epoch, driven by (seed, epoch). The final
// short batch is retained.
std::vector<std::vector<int32_t>> batches(int64_t dataset_size, int batch_size, uint64_t seed, int epoch);

Tensor gather_rows(const Tensor& images, const std::vector<int32_t>& rows);
std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int32_t>& rows);

}  // namespace scl
