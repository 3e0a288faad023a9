#include "scl/experiment.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace scl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string run_dir_name(const std::string& arch, double lambda1, uint64_t seed) {
  return arch + "_l1" + format_float(lambda1) + "_s" + std::to_string(seed);
}

static json config_json(const TrainConfig& c) {
  json j;
  j["arch"] = c.arch;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["l2_mode"] = c.l2_mode == L2Mode::Effective ? "effective" : "weight_variable";
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["ste"] = ste_kind_name(c.ste.kind);
  j["ste_alpha"] = c.ste.alpha;
  j["gradnorm"] = c.gradnorm;
  j["gradnorm_stat"] = c.gradnorm_batch_stat ? "batch_mean" : "per_sample";
  j["momentum"] = c.momentum;
  j["mask_init"] = c.mask_init;
  json sched = json::array();
  for (const auto& [e, r] : c.lr_schedule) sched.push_back({{"epoch", e}, {"lr", r}});
  j["lr_schedule"] = sched;
  json freeze = json::array();
  for (const auto& [lo, hi] : c.mask_freeze) freeze.push_back({{"begin", lo}, {"end", hi}});
  j["mask_freeze"] = freeze;
  return j;
}

SweepRow run_and_save(const TrainConfig& config, const MnistData& data, const std::string& out_root) {
  TrainResult result = train(config, data);

  const std::string dir = out_root + "/" + run_dir_name(config.arch, config.lambda1, config.seed);
  fs::create_directories(dir);

  SparseModelHeader hdr;
  hdr.arch = config.arch;
  hdr.seed = config.seed;
  hdr.lambda1 = config.lambda1;
  hdr.lambda2 = config.lambda2;
  save_sparse(*result.net, hdr, dir + "/model.sclz");
  write_history_csv(dir + "/history.csv", result.history);

  const double final_sparsity = sparsity(*result.net);
  const double final_acc = result.history.records.back().metric;
  json summary;
  summary["config"] = config_json(config);
  summary["final_sparsity"] = final_sparsity;
  summary["final_accuracy"] = final_acc;
  summary["surviving_params"] = result.net->surviving_count();
  summary["total_params"] = result.net->masked_weight_count();
  summary["epochs_run"] = result.history.records.size();
  write_file_atomic(dir + "/summary.json", summary.dump(2) + "\n");

  return SweepRow{config.lambda1, result.net->surviving_count(), final_sparsity, final_acc};
}

SweepRow ensure_run(const TrainConfig& config, const MnistData& data, const std::string& out_root,
                    bool* reused) {
  if (reused) *reused = false;
  const std::string dir = out_root + "/" + run_dir_name(config.arch, config.lambda1, config.seed);
  const std::string summary_path = dir + "/summary.json";
  if (fs::exists(summary_path) && fs::exists(dir + "/model.sclz")) {
    try {
      std::ifstream in(summary_path);
      json summary = json::parse(in);
      if (summary["config"] == config_json(config)) {
        if (reused) *reused = true;
        return SweepRow{config.lambda1, summary["surviving_params"].get<int64_t>(),
                        summary["final_sparsity"].get<double>(), summary["final_accuracy"].get<double>()};
      }
    } catch (const std::exception&) {
      // fall through to a fresh run
    }
  }
  return run_and_save(config, data, out_root);
}

}  // namespace scl
