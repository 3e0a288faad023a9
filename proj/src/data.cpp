#include "scl/data.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "scl/rng.hpp"

namespace scl {

namespace {

class GzReader {
 public:
  explicit GzReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
    if (!file_) throw std::runtime_error("cannot open " + path);
  }
  ~GzReader() {
    if (file_) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read_exact(void* dst, size_t n) {
    const int got = gzread(file_, dst, static_cast<unsigned>(n));
    if (got < 0 || static_cast<size_t>(got) != n)
      throw std::runtime_error(path_ + ": truncated at offset " + std::to_string(offset_ + (got > 0 ? got : 0)));
    offset_ += n;
  }

  uint32_t read_u32_be() {
    uint8_t b[4];
    read_exact(b, 4);
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
  }

  bool at_eof() {
    // gzeof only turns true after a failed read, so probe one byte.
    uint8_t probe;
    const int got = gzread(file_, &probe, 1);
    return got == 0;
  }

  size_t offset() const { return offset_; }

 private:
  std::string path_;
  gzFile file_;
  size_t offset_ = 0;
};

}  // namespace

IdxData read_idx(const std::string& path) {
  GzReader in(path);
  const uint32_t magic = in.read_u32_be();
  if ((magic >> 16) != 0)
    throw std::runtime_error(path + ": bad IDX magic 0x" + std::to_string(magic) + " at offset 0");
  IdxData idx;
  idx.dtype = static_cast<uint8_t>((magic >> 8) & 0xff);
  const int ndims = static_cast<int>(magic & 0xff);
  if (idx.dtype != 0x08)
    throw std::runtime_error(path + ": unsupported IDX dtype " + std::to_string(idx.dtype) + " at offset 2");
  if (ndims < 1 || ndims > 4)
    throw std::runtime_error(path + ": unsupported IDX rank " + std::to_string(ndims) + " at offset 3");
  int64_t count = 1;
  for (int d = 0; d < ndims; ++d) {
    const uint32_t dim = in.read_u32_be();
    idx.dims.push_back(static_cast<int64_t>(dim));
    count *= dim;
  }
  idx.bytes.resize(static_cast<size_t>(count));
  in.read_exact(idx.bytes.data(), idx.bytes.size());
  if (!in.at_eof())
    throw std::runtime_error(path + ": trailing bytes at offset " + std::to_string(in.offset()));
  return idx;
}

void write_idx(const std::string& path, const IdxData& idx) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  const auto put_u32 = [f](uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                          static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    std::fwrite(b, 1, 4, f);
  };
  put_u32((static_cast<uint32_t>(idx.dtype) << 8) | static_cast<uint32_t>(idx.dims.size()));
  for (int64_t d : idx.dims) put_u32(static_cast<uint32_t>(d));
  std::fwrite(idx.bytes.data(), 1, idx.bytes.size(), f);
  std::fclose(f);
}

MnistSplit load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  IdxData images = read_idx(images_path);
  if (images.dims.size() != 3)
    throw std::runtime_error(images_path + ": expected 3-d image file (magic 0x00000803), got rank " +
                             std::to_string(images.dims.size()));
  IdxData labels = read_idx(labels_path);
  if (labels.dims.size() != 1)
    throw std::runtime_error(labels_path + ": expected 1-d label file (magic 0x00000801), got rank " +
                             std::to_string(labels.dims.size()));
  if (images.dims[0] != labels.dims[0])
    throw std::runtime_error("image count " + std::to_string(images.dims[0]) + " does not match label count " +
                             std::to_string(labels.dims[0]));
  const int64_t n = images.dims[0];
  const int64_t pixels = images.dims[1] * images.dims[2];
  MnistSplit split;
  split.images = Tensor({n, pixels});
  for (size_t i = 0; i < images.bytes.size(); ++i)
    split.images.data[i] = static_cast<float>(images.bytes[i]) / 255.0f;
  split.labels.assign(labels.bytes.begin(), labels.bytes.end());
  return split;
}

Moments compute_moments(const Tensor& images) {
  // Double accumulators: this is a dataset statistic, not a training value.
  double sum = 0.0;
  for (float v : images.data) sum += v;
  const double mean = sum / static_cast<double>(images.data.size());
  double sq = 0.0;
  for (float v : images.data) {
    const double d = v - mean;
    sq += d * d;
  }
  Moments m;
  m.mean = static_cast<float>(mean);
  m.stddev = static_cast<float>(std::sqrt(sq / static_cast<double>(images.data.size())));
  return m;
}

void standardize_inplace(Tensor& images, const Moments& m) {
  const float inv = 1.0f / m.stddev;
  for (float& v : images.data) v = (v - m.mean) * inv;
}

static std::string pick_existing(const std::string& dir, const std::string& name) {
  namespace fs = std::filesystem;
  const std::string plain = dir + "/" + name;
  if (fs::exists(plain)) return plain;
  const std::string gz = plain + ".gz";
  if (fs::exists(gz)) return gz;
  throw std::runtime_error("missing dataset file " + plain + "[.gz]");
}

MnistData load_mnist_dir(const std::string& dir) {
  MnistData data;
  data.train = load_mnist_idx(pick_existing(dir, "train-images-idx3-ubyte"),
                              pick_existing(dir, "train-labels-idx1-ubyte"));
  data.test = load_mnist_idx(pick_existing(dir, "t10k-images-idx3-ubyte"),
                             pick_existing(dir, "t10k-labels-idx1-ubyte"));
  data.moments = compute_moments(data.train.images);
  standardize_inplace(data.train.images, data.moments);
  standardize_inplace(data.test.images, data.moments);
  return data;
}

Tensor gen_mapping_inputs(int64_t n, int64_t dim, uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x3a11fe);
  return rng.normal_tensor({n, dim});
}

std::vector<std::vector<int32_t>> batches(int64_t dataset_size, int batch_size, uint64_t seed, int epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<int32_t> order(static_cast<size_t>(dataset_size));
  for (int64_t i = 0; i < dataset_size; ++i) order[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  Rng rng = Rng::derive(seed, 0xb00c0 + static_cast<uint64_t>(epoch));
  for (int64_t i = dataset_size - 1; i > 0; --i) {
    const uint64_t j = rng.below(static_cast<uint64_t>(i + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  std::vector<std::vector<int32_t>> out;
  for (int64_t start = 0; start < dataset_size; start += batch_size) {
    const int64_t end = std::min<int64_t>(start + batch_size, dataset_size);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

Tensor gather_rows(const Tensor& images, const std::vector<int32_t>& rows) {
  const int64_t cols = images.shape[1];
  Tensor out({static_cast<int64_t>(rows.size()), cols});
  for (size_t r = 0; r < rows.size(); ++r) {
    const float* src = images.data.data() + static_cast<int64_t>(rows[r]) * cols;
    float* dst = out.data.data() + static_cast<int64_t>(r) * cols;
    for (int64_t c = 0; c < cols; ++c) dst[c] = src[c];
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int32_t>& rows) {
  std::vector<int> out(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) out[r] = labels[static_cast<size_t>(rows[r])];
  return out;
}

}  // namespace scl
