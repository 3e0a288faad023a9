#pragma once

#include <string>

#include "scl/data.hpp"
#include "scl/model_io.hpp"
#include "scl/trainer.hpp"

namespace scl {

std::string run_dir_name(const std::string& arch, double lambda1, uint64_t seed);

// Trains one configuration and writes <out_root>/<run dir>/{model.sclz,
// history.csv, summary.json}. The summary echoes the effective config.
SweepRow run_and_save(const TrainConfig& config, const MnistData& data, const std::string& out_root);

// Same, but reuses an existing run directory when its summary echoes an
// identical configuration. Runs are deterministic in the config, so a
// matching echo means matching artifacts.
SweepRow ensure_run(const TrainConfig& config, const MnistData& data, const std::string& out_root,
                    bool* reused = nullptr);

}  // namespace scl
