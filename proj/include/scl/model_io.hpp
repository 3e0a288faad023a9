#pragma once

#include <memory>
#include <string>

#include "scl/layers.hpp"
#include "scl/trainer.hpp"

namespace scl {

// Sparse model container. Little-endian binary with a header followed by
// one COO record per masked layer (sorted ascending row-major indices) and
// the dense batch-norm state. See docs/format.md.
struct SparseModelHeader {
  std::string arch;
  uint32_t version = 1;
  uint64_t seed = 0;
  float lambda1 = 0.0f;
  float lambda2 = 0.0f;
  double final_sparsity = 0.0;
};

void save_sparse(Network& net, const SparseModelHeader& header, const std::string& path);

struct LoadedModel {
  SparseModelHeader header;
  std::unique_ptr<Network> net;
};

// Rebuilds an inference-ready network whose forward pass matches the
// pre-save masked network exactly.
LoadedModel load_sparse(const std::string& path);

void write_history_csv(const std::string& path, const RunHistory& history);

struct SweepRow {
  float lambda1 = 0.0f;
  int64_t params = 0;
  double sparsity = 0.0;
  double accuracy = 0.0;
};

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

std::string format_float(double v);  // 6 significant digits

// Atomic file write (temp + rename).
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace scl
