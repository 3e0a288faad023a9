#include <stdexcept>
#include <filesystem>

#include "doctest.h"
#include "scl/model_io.hpp"
#include "scl/rng.hpp"
#include "test_util.hpp"

using namespace scl;

namespace {

DenseFcNet small_net(uint64_t seed) {
  DenseFcNet net = build_dense_fc(4, 3, 6, 10);
  net.init(seed, 1.0f);
  Rng rng(seed + 100);
  for (MaskedLayer* l : net.masked_layers()) l->param.mask_variable = rng.normal_tensor(l->param.mask_variable.shape);
  Rng bn_rng(seed + 200);
  for (BatchNorm* bn : net.batch_norms()) {
    bn->gamma = bn_rng.normal_tensor(bn->gamma.shape, 1.0f, 0.1f);
    bn->beta = bn_rng.normal_tensor(bn->beta.shape, 0.0f, 0.1f);
    bn->running_mean = bn_rng.normal_tensor(bn->running_mean.shape, 0.0f, 0.5f);
    bn->running_var = bn_rng.normal_tensor(bn->running_var.shape, 1.0f, 0.1f);
  }
  return net;
}

}  // namespace

TEST_SUITE("model_io") {

TEST_CASE("save then load preserves the masked state bit for bit") {
  DenseFcNet net = small_net(1);
  SparseModelHeader hdr;
  hdr.arch = net.arch();
  hdr.seed = 42;
  hdr.lambda1 = 0.03f;
  hdr.lambda2 = 1e-4f;
  const std::string path = "model_roundtrip.sclz";
  save_sparse(net, hdr, path);

  LoadedModel loaded = load_sparse(path);
  CHECK(loaded.header.arch == "dense_fc");
  CHECK(loaded.header.seed == 42);
  CHECK(loaded.header.lambda1 == 0.03f);
  CHECK(loaded.header.final_sparsity == sparsity(net));

  auto orig_layers = net.masked_layers();
  auto new_layers = loaded.net->masked_layers();
  REQUIRE(orig_layers.size() == new_layers.size());
  int64_t surviving = 0;
  for (size_t l = 0; l < orig_layers.size(); ++l) {
    Tensor expect = effective_weight(orig_layers[l]->param);
    CHECK(new_layers[l]->param.weight_variable.data == expect.data);
    CHECK(effective_weight(new_layers[l]->param).data == expect.data);
    for (float v : new_layers[l]->param.mask_variable.data) surviving += v > 0.0f ? 1 : 0;
  }
  CHECK(surviving == net.surviving_count());

  auto orig_bns = net.batch_norms();
  auto new_bns = loaded.net->batch_norms();
  for (size_t i = 0; i < orig_bns.size(); ++i) {
    CHECK(new_bns[i]->gamma.data == orig_bns[i]->gamma.data);
    CHECK(new_bns[i]->beta.data == orig_bns[i]->beta.data);
    CHECK(new_bns[i]->running_mean.data == orig_bns[i]->running_mean.data);
    CHECK(new_bns[i]->running_var.data == orig_bns[i]->running_var.data);
  }

  // forward equivalence in eval mode
  Tensor x = Rng(9).normal_tensor({32, 6});
  Tensor a = eval_logits(net, x);
  Tensor b = eval_logits(*loaded.net, x);
  CHECK(a.data == b.data);

  std::filesystem::remove(path);
}

TEST_CASE("saving is deterministic and atomic") {
  DenseFcNet net = small_net(2);
  SparseModelHeader hdr;
  hdr.arch = net.arch();
  save_sparse(net, hdr, "model_a.sclz");
  save_sparse(net, hdr, "model_b.sclz");
  CHECK(slurp("model_a.sclz") == slurp("model_b.sclz"));
  CHECK(!std::filesystem::exists("model_a.sclz.tmp"));
  std::filesystem::remove("model_a.sclz");
  std::filesystem::remove("model_b.sclz");
}

TEST_CASE("empty and fully dense layers") {
  DenseFcNet net = small_net(3);
  auto layers = net.masked_layers();
  layers[0]->param.mask_variable = Tensor::full(layers[0]->param.mask_variable.shape, -1.0f);
  layers[1]->param.mask_variable = Tensor::full(layers[1]->param.mask_variable.shape, 1.0f);
  SparseModelHeader hdr;
  hdr.arch = net.arch();
  const std::string path = "model_edges.sclz";
  save_sparse(net, hdr, path);
  LoadedModel loaded = load_sparse(path);

  auto nl = loaded.net->masked_layers();
  SparseWeights empty = extract_sparse(nl[0]->param);
  CHECK(empty.indices.empty());
  CHECK(empty.shape == layers[0]->param.weight_variable.shape);
  SparseWeights dense = extract_sparse(nl[1]->param);
  CHECK(dense.indices.size() == static_cast<size_t>(layers[1]->param.weight_variable.numel()));
  for (size_t i = 0; i < dense.indices.size(); ++i) CHECK(dense.indices[i] == static_cast<int64_t>(i));
  std::filesystem::remove(path);
}

TEST_CASE("format errors are rejected with offsets") {
  DenseFcNet net = small_net(4);
  SparseModelHeader hdr;
  hdr.arch = net.arch();
  const std::string path = "model_corrupt.sclz";
  save_sparse(net, hdr, path);
  std::string bytes = slurp(path);

  // bad magic
  {
    std::string bad = bytes;
    bad[0] = 'X';
    write_file_atomic(path, bad);
    CHECK_THROWS_WITH_AS(load_sparse(path), doctest::Contains("magic"), std::runtime_error);
  }
  // unsupported version
  {
    std::string bad = bytes;
    bad[4] = 99;
    write_file_atomic(path, bad);
    CHECK_THROWS_WITH_AS(load_sparse(path), doctest::Contains("version"), std::runtime_error);
  }
  // truncation
  {
    write_file_atomic(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_WITH_AS(load_sparse(path), doctest::Contains("offset"), std::runtime_error);
  }
  std::filesystem::remove(path);
}

TEST_CASE("unsorted, duplicate, and out-of-range indices are rejected") {
  // Hand-built single-layer mapfit file exercises the index validation.
  auto build_file = [](const std::vector<uint64_t>& indices, const std::string& path) {
    std::string buf;
    auto put32 = [&](uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); };
    auto put64 = [&](uint64_t v) { buf.append(reinterpret_cast<const char*>(&v), 8); };
    buf.append("SCLZ", 4);
    put32(1);                      // version
    put32(6);                      // arch string length
    buf.append("mapfit", 6);
    put64(7);                      // seed
    float f = 0.0f;
    buf.append(reinterpret_cast<const char*>(&f), 4);  // lambda1
    buf.append(reinterpret_cast<const char*>(&f), 4);  // lambda2
    double d = 0.0;
    buf.append(reinterpret_cast<const char*>(&d), 8);  // sparsity
    put32(1);                      // one layer
    put32(2);                      // rank
    put64(2);                      // 2x2
    put64(2);
    put64(indices.size());
    for (uint64_t i : indices) put64(i);
    for (size_t i = 0; i < indices.size(); ++i) buf.append(reinterpret_cast<const char*>(&f), 4);
    put32(1);                      // one batch norm
    put32(2);                      // features
    for (int i = 0; i < 8; ++i) buf.append(reinterpret_cast<const char*>(&f), 4);  // gamma..var
    buf.append(reinterpret_cast<const char*>(&f), 4);  // momentum
    buf.append(reinterpret_cast<const char*>(&f), 4);  // eps
    write_file_atomic(path, buf);
  };

  const std::string path = "model_indices.sclz";
  build_file({0, 3}, path);
  CHECK_NOTHROW(load_sparse(path));
  build_file({3, 0}, path);
  CHECK_THROWS_WITH_AS(load_sparse(path), doctest::Contains("sorted"), std::runtime_error);
  build_file({1, 1}, path);
  CHECK_THROWS_WITH_AS(load_sparse(path), doctest::Contains("sorted"), std::runtime_error);
  build_file({0, 4}, path);
  CHECK_THROWS_WITH_AS(load_sparse(path), doctest::Contains("out of bounds"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("history csv: schema, empty case, deterministic bytes") {
  RunHistory history;
  write_history_csv("history_empty.csv", history);
  CHECK(slurp("history_empty.csv") == "epoch,objective,task_loss,degree,sparsity,metric\n");

  EpochRecord r;
  r.epoch = 0;
  r.objective = 2.345678f;
  r.task_loss = 1.23f;
  r.degree = 117152;
  r.sparsity = 0.0;
  r.metric = 0.9812;
  history.records.push_back(r);
  write_history_csv("history_a.csv", history);
  write_history_csv("history_b.csv", history);
  const std::string a = slurp("history_a.csv");
  CHECK(a == slurp("history_b.csv"));
  CHECK(a.find("117152") != std::string::npos);
  CHECK(a.find("0.9812") != std::string::npos);

  for (const char* f : {"history_empty.csv", "history_a.csv", "history_b.csv"}) std::filesystem::remove(f);
}

TEST_CASE("sweep csv schema") {
  std::vector<SweepRow> rows = {{0.03f, 4488, 0.962, 0.9801}};
  write_sweep_csv("sweep.csv", rows);
  const std::string text = slurp("sweep.csv");
  CHECK(text.find("lambda1,params,sparsity,accuracy") == 0);
  CHECK(text.find("0.03,4488,0.962,0.9801") != std::string::npos);
  std::filesystem::remove("sweep.csv");
}

TEST_CASE("six significant digit float formatting") {
  CHECK(format_float(0.96234567) == "0.962346");
  CHECK(format_float(117152.0) == "117152");
  CHECK(format_float(0.0) == "0");
}

}  // TEST_SUITE
