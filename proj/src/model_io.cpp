#include "scl/model_io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace scl {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'L', 'Z'};

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf_.append(raw, sizeof(T));  // host is little-endian x86
  }
  void put_bytes(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void put_string(const std::string& s) {
    put<uint32_t>(static_cast<uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* p, size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string() {
    const uint32_t n = get<uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t offset() const { return pos_; }
  bool exhausted() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(path_ + ": " + what + " at offset " + std::to_string(pos_));
  }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size()) fail("truncated record");
  }
  std::string data_;
  std::string path_;
  size_t pos_ = 0;
};

void put_tensor_values(ByteWriter& w, const Tensor& t) {
  w.put_bytes(t.data.data(), t.data.size() * sizeof(float));
}

void get_tensor_values(ByteReader& r, Tensor& t) {
  r.get_bytes(t.data.data(), t.data.size() * sizeof(float));
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_sparse(Network& net, const SparseModelHeader& header, const std::string& path) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<uint32_t>(header.version);
  w.put_string(header.arch);
  w.put<uint64_t>(header.seed);
  w.put<float>(header.lambda1);
  w.put<float>(header.lambda2);
  // The stored sparsity is always derived from the masks being written.
  w.put<double>(sparsity(net));

  const auto layers = net.masked_layers();
  w.put<uint32_t>(static_cast<uint32_t>(layers.size()));
  for (const MaskedLayer* l : layers) {
    const SparseWeights s = extract_sparse(l->param);
    w.put<uint32_t>(static_cast<uint32_t>(s.shape.size()));
    for (int64_t d : s.shape) w.put<uint64_t>(static_cast<uint64_t>(d));
    w.put<uint64_t>(static_cast<uint64_t>(s.indices.size()));
    for (int64_t i : s.indices) w.put<uint64_t>(static_cast<uint64_t>(i));
    w.put_bytes(s.values.data(), s.values.size() * sizeof(float));
  }

  const auto bns = net.batch_norms();
  w.put<uint32_t>(static_cast<uint32_t>(bns.size()));
  for (const BatchNorm* bn : bns) {
    w.put<uint32_t>(static_cast<uint32_t>(bn->features()));
    put_tensor_values(w, bn->gamma);
    put_tensor_values(w, bn->beta);
    put_tensor_values(w, bn->running_mean);
    put_tensor_values(w, bn->running_var);
    w.put<float>(bn->momentum);
    w.put<float>(bn->eps);
  }
  write_file_atomic(path, w.str());
}

namespace {

struct LayerRecord {
  SparseWeights weights;
};

std::unique_ptr<Network> rebuild(const std::string& arch, const std::vector<LayerRecord>& layers) {
  if (arch == "dense_fc") {
    if (layers.size() < 2) throw std::runtime_error("dense_fc model needs at least two layers");
    const int depth = static_cast<int>(layers.size()) - 1;
    const int64_t growth = layers.front().weights.shape[0];
    const int64_t input_dim = layers.front().weights.shape[1];
    const int64_t classes = layers.back().weights.shape[0];
    auto net = std::make_unique<DenseFcNet>(depth, static_cast<int>(growth), input_dim, classes);
    return net;
  }
  if (arch == "mapfit") {
    const int64_t width = layers.front().weights.shape[0];
    return std::make_unique<MapfitNet>(static_cast<int>(width), static_cast<int>(layers.size()));
  }
  throw std::runtime_error("unknown architecture '" + arch + "' in sparse model");
}

}  // namespace

LoadedModel load_sparse(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ByteReader r(ss.str(), path);

  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + ": bad magic at offset 0 (not a sparse model file)");
  LoadedModel m;
  m.header.version = r.get<uint32_t>();
  if (m.header.version != 1)
    throw std::runtime_error(path + ": unsupported version " + std::to_string(m.header.version) +
                             " at offset 4");
  m.header.arch = r.get_string();
  m.header.seed = r.get<uint64_t>();
  m.header.lambda1 = r.get<float>();
  m.header.lambda2 = r.get<float>();
  m.header.final_sparsity = r.get<double>();

  const uint32_t n_layers = r.get<uint32_t>();
  std::vector<LayerRecord> records;
  records.reserve(n_layers);
  for (uint32_t li = 0; li < n_layers; ++li) {
    LayerRecord rec;
    const uint32_t rank = r.get<uint32_t>();
    if (rank == 0 || rank > 4) r.fail("layer rank " + std::to_string(rank) + " out of range");
    int64_t total = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      rec.weights.shape.push_back(static_cast<int64_t>(r.get<uint64_t>()));
      total *= rec.weights.shape.back();
    }
    const uint64_t nnz = r.get<uint64_t>();
    if (nnz > static_cast<uint64_t>(total)) r.fail("index count exceeds layer size");
    rec.weights.indices.resize(nnz);
    for (uint64_t i = 0; i < nnz; ++i) {
      const int64_t idx = static_cast<int64_t>(r.get<uint64_t>());
      if (idx >= total) r.fail("index " + std::to_string(idx) + " out of bounds for layer of numel " +
                               std::to_string(total));
      if (i > 0 && idx <= rec.weights.indices[i - 1])
        r.fail("indices not sorted strictly ascending near " + std::to_string(idx));
      rec.weights.indices[i] = idx;
    }
    rec.weights.values.resize(nnz);
    r.get_bytes(rec.weights.values.data(), nnz * sizeof(float));
    records.push_back(std::move(rec));
  }

  m.net = rebuild(m.header.arch, records);
  auto layers = m.net->masked_layers();
  if (layers.size() != records.size()) throw std::runtime_error(path + ": layer count mismatch");
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i]->param.weight_variable.shape != records[i].weights.shape)
      throw std::runtime_error(path + ": layer " + std::to_string(i) + " shape " +
                               shape_to_string(records[i].weights.shape) + " does not match architecture " +
                               layers[i]->param.weight_variable.shape_str());
    layers[i]->param.weight_variable = densify(records[i].weights);
    Tensor mask = Tensor::full(records[i].weights.shape, -1.0f);
    for (int64_t idx : records[i].weights.indices) mask.data[static_cast<size_t>(idx)] = 1.0f;
    layers[i]->param.mask_variable = std::move(mask);
    layers[i]->param.frozen_mask = true;
  }

  const uint32_t n_bn = r.get<uint32_t>();
  auto bns = m.net->batch_norms();
  if (bns.size() != n_bn) throw std::runtime_error(path + ": batch norm count mismatch");
  for (uint32_t i = 0; i < n_bn; ++i) {
    const uint32_t features = r.get<uint32_t>();
    if (static_cast<int64_t>(features) != bns[i]->features())
      r.fail("batch norm feature count mismatch");
    get_tensor_values(r, bns[i]->gamma);
    get_tensor_values(r, bns[i]->beta);
    get_tensor_values(r, bns[i]->running_mean);
    get_tensor_values(r, bns[i]->running_var);
    bns[i]->momentum = r.get<float>();
    bns[i]->eps = r.get<float>();
  }
  if (!r.exhausted()) r.fail("trailing bytes");
  return m;
}

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_history_csv(const std::string& path, const RunHistory& history) {
  std::string out = "epoch,objective,task_loss,degree,sparsity,metric\n";
  for (const EpochRecord& r : history.records) {
    out += std::to_string(r.epoch) + "," + format_float(r.objective) + "," + format_float(r.task_loss) + "," +
           std::to_string(r.degree) + "," + format_float(r.sparsity) + "," + format_float(r.metric) + "\n";
  }
  write_file_atomic(path, out);
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::string out = "lambda1,params,sparsity,accuracy\n";
  for (const SweepRow& r : rows) {
    out += format_float(r.lambda1) + "," + std::to_string(r.params) + "," + format_float(r.sparsity) + "," +
           format_float(r.accuracy) + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace scl
