// Command line driver: training runs, lambda1 sweeps, the map-fitting
// experiment, and post-hoc extraction of sparse models and visualization
// grids. Every command is reproducible from (flags, seed).

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "scl/data.hpp"
#include "scl/experiment.hpp"
#include "scl/model_io.hpp"
#include "scl/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_data_dir() {
  const char* env = std::getenv("SCL_DATA_DIR");
  return env ? env : "data/mnist";
}

std::vector<std::pair<int, float>> parse_schedule(const std::string& text) {
  // "0:0.1,45:0.01"
  std::vector<std::pair<int, float>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw CLI::ValidationError("--lr-schedule", "expected epoch:rate pairs, got '" + item + "'");
    out.emplace_back(std::stoi(item.substr(0, colon)), std::stof(item.substr(colon + 1)));
  }
  return out;
}

std::vector<std::pair<int, int>> parse_ranges(const std::string& text) {
  // "0:15,45:60"; empty string means no freezing
  std::vector<std::pair<int, int>> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw CLI::ValidationError("--freeze", "expected begin:end ranges, got '" + item + "'");
    out.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
  }
  return out;
}

struct TrainFlags {
  std::string arch = "dense_fc";
  double lambda1 = 0.0;
  double lambda2 = 1e-4;
  std::string l2_mode = "effective";
  int epochs = 60;
  int batch_size = 64;
  uint64_t seed = 1;
  std::string ste = "identity";
  double ste_alpha = -1.0;  // negative: kind-specific default
  bool no_norm = false;
  std::string norm_stat = "per-sample";
  bool baseline = false;
  double momentum = 0.0;
  std::string lr_schedule = "0:0.1,45:0.01";
  std::string freeze = "0:15,45:60";
  std::string data_dir = default_data_dir();
  std::string out_dir = "runs";
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--arch", f.arch, "Architecture id")->capture_default_str();
  cmd->add_option("--lambda1", f.lambda1, "Connectivity decay coefficient")->capture_default_str();
  cmd->add_option("--lambda2", f.lambda2, "L2 regularization coefficient")->capture_default_str();
  cmd->add_option("--l2", f.l2_mode, "L2 target: effective (masked weights) or weight-variable")
      ->capture_default_str();
  cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Run seed")->capture_default_str();
  cmd->add_option("--ste", f.ste, "STE kind: relu, clipped_relu, leaky_relu, softplus, identity")
      ->capture_default_str();
  cmd->add_option("--ste-alpha", f.ste_alpha, "STE alpha (clip threshold / negative slope)");
  cmd->add_flag("--no-norm", f.no_norm, "Disable mask gradient normalization");
  cmd->add_option("--norm-stat", f.norm_stat, "Normalization scale statistic: per-sample or batch-mean")
      ->capture_default_str();
  cmd->add_flag("--baseline", f.baseline, "Freeze all masks at 1 for the whole run");
  cmd->add_option("--momentum", f.momentum, "SGD momentum (0 = plain SGD)")->capture_default_str();
  cmd->add_option("--lr-schedule", f.lr_schedule, "epoch:rate list")->capture_default_str();
  cmd->add_option("--freeze", f.freeze, "Mask freeze ranges begin:end list")->capture_default_str();
  cmd->add_option("--data", f.data_dir, "MNIST directory (default $SCL_DATA_DIR)")->capture_default_str();
  cmd->add_option("--out", f.out_dir, "Output directory root")->capture_default_str();
}

scl::TrainConfig to_config(const TrainFlags& f) {
  scl::TrainConfig c;
  c.arch = f.arch;
  c.lambda1 = static_cast<float>(f.lambda1);
  c.lambda2 = static_cast<float>(f.lambda2);
  if (f.l2_mode == "effective")
    c.l2_mode = scl::L2Mode::Effective;
  else if (f.l2_mode == "weight-variable" || f.l2_mode == "weight_variable")
    c.l2_mode = scl::L2Mode::WeightVariable;
  else
    throw CLI::ValidationError("--l2", "expected effective or weight-variable");
  c.epochs = f.epochs;
  c.batch_size = f.batch_size;
  c.seed = f.seed;
  c.momentum = static_cast<float>(f.momentum);
  c.gradnorm = !f.no_norm;
  if (f.norm_stat == "batch-mean" || f.norm_stat == "batch_mean")
    c.gradnorm_batch_stat = true;
  else if (f.norm_stat != "per-sample" && f.norm_stat != "per_sample")
    throw CLI::ValidationError("--norm-stat", "expected per-sample or batch-mean");
  c.lr_schedule = parse_schedule(f.lr_schedule);
  c.mask_freeze = f.baseline ? std::vector<std::pair<int, int>>{{0, f.epochs}} : parse_ranges(f.freeze);
  c.ste.kind = scl::ste_kind_from_string(f.ste);
  if (f.ste_alpha > 0.0) {
    c.ste.alpha = static_cast<float>(f.ste_alpha);
  } else if (c.ste.kind == scl::SteKind::LeakyReLU) {
    c.ste.alpha = 0.01f;
  } else if (c.ste.kind == scl::SteKind::ClippedReLU) {
    c.ste.alpha = 1.0f;
  }
  c.validate();
  return c;
}

scl::MnistData load_data_or_explain(const std::string& dir) {
  try {
    return scl::load_mnist_dir(dir);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(e.what()) + " (set --data or SCL_DATA_DIR)");
  }
}

int cmd_train(const TrainFlags& flags) {
  const scl::TrainConfig config = to_config(flags);
  const scl::MnistData data = load_data_or_explain(flags.data_dir);
  const scl::SweepRow row = scl::run_and_save(config, data, flags.out_dir);
  std::printf("run %s: sparsity %.4f accuracy %.4f params %lld\n",
              scl::run_dir_name(config.arch, config.lambda1, config.seed).c_str(), row.sparsity, row.accuracy,
              static_cast<long long>(row.params));
  return 0;
}

int cmd_sweep(const TrainFlags& flags, std::vector<double> lambdas, std::vector<uint64_t> seeds, int jobs,
              bool with_baseline) {
  const scl::MnistData data = load_data_or_explain(flags.data_dir);
  struct Job {
    scl::TrainConfig config;
    bool baseline;
  };
  std::vector<Job> todo;
  for (uint64_t seed : seeds) {
    if (with_baseline) {
      TrainFlags f = flags;
      f.baseline = true;
      f.lambda1 = 0.0;
      f.seed = seed;
      Job j{to_config(f), true};
      j.config.arch = flags.arch;
      todo.push_back(j);
    }
    for (double l1 : lambdas) {
      TrainFlags f = flags;
      f.lambda1 = l1;
      f.seed = seed;
      todo.push_back({to_config(f), false});
    }
  }

  std::vector<scl::SweepRow> rows(todo.size());
  std::vector<std::string> errors(todo.size());
  std::atomic<size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const std::string name =
          scl::run_dir_name(todo[i].config.arch, todo[i].config.lambda1, todo[i].config.seed) +
          (todo[i].baseline ? " (baseline)" : "");
      try {
        // Baseline runs land under <out>/baseline/ to keep the sweep rows
        // distinct from the lambda1=0 run.
        std::string root = flags.out_dir;
        if (todo[i].baseline) root += "/baseline";
        rows[i] = scl::run_and_save(todo[i].config, data, root);
        std::lock_guard<std::mutex> lock(log_mutex);
        std::printf("[done] %s sparsity %.4f accuracy %.4f\n", name.c_str(), rows[i].sparsity,
                    rows[i].accuracy);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(log_mutex);
        errors[i] = e.what();
        std::fprintf(stderr, "[fail] %s: %s\n", name.c_str(), e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  std::vector<scl::SweepRow> ok_rows;
  int failures = 0;
  for (size_t i = 0; i < todo.size(); ++i) {
    if (!errors[i].empty()) {
      ++failures;
      continue;
    }
    if (!todo[i].baseline) ok_rows.push_back(rows[i]);
  }
  fs::create_directories(flags.out_dir);
  scl::write_sweep_csv(flags.out_dir + "/sweep_summary.csv", ok_rows);
  std::printf("sweep complete: %zu runs, %d failed; summary at %s/sweep_summary.csv\n", todo.size(), failures,
              flags.out_dir.c_str());
  return failures == 0 ? 0 : 1;
}

int cmd_fitmap(const std::string& ste_list, const std::string& norm_mode, int seeds, int steps, double lr,
               int inputs, int jobs, uint64_t seed, const std::string& out_dir) {
  scl::MapfitOptions opt;
  opt.kinds.clear();
  std::stringstream ss(ste_list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    scl::Ste ste;
    ste.kind = scl::ste_kind_from_string(name);
    ste.alpha = ste.kind == scl::SteKind::LeakyReLU ? 0.01f : 1.0f;
    opt.kinds.push_back(ste);
  }
  if (norm_mode == "on") {
    opt.norm_off = false;
  } else if (norm_mode == "off") {
    opt.norm_on = false;
  } else if (norm_mode != "both") {
    throw CLI::ValidationError("--norm", "expected on, off, or both");
  }
  opt.seeds = seeds;
  opt.steps = steps;
  opt.lr = static_cast<float>(lr);
  opt.n_inputs = inputs;
  opt.jobs = jobs;
  opt.base_seed = seed;

  const std::vector<scl::MapfitSeries> series = scl::mapfit_experiment(opt);
  fs::create_directories(out_dir);
  // One CSV per condition: rows are steps, one column per seed.
  for (const scl::Ste& kind : opt.kinds) {
    for (bool norm : {true, false}) {
      if ((norm && !opt.norm_on) || (!norm && !opt.norm_off)) continue;
      std::vector<const scl::MapfitSeries*> cols;
      for (const scl::MapfitSeries& s : series)
        if (s.ste_name == scl::ste_kind_name(kind.kind) && s.norm == norm) cols.push_back(&s);
      std::string csv = "step";
      for (const scl::MapfitSeries* s : cols) csv += ",seed" + std::to_string(s->seed);
      csv += "\n";
      for (size_t row = 0; row < cols.front()->mse.size(); ++row) {
        csv += std::to_string(row);
        for (const scl::MapfitSeries* s : cols) csv += "," + scl::format_float(s->mse[row]);
        csv += "\n";
      }
      const std::string path = out_dir + "/fitmap_" + scl::ste_kind_name(kind.kind) +
                               (norm ? "_norm" : "_nonorm") + ".csv";
      scl::write_file_atomic(path, csv);
    }
  }
  // Compact summary of final MSEs.
  std::string summary = "ste,norm,seed,final_mse\n";
  for (const scl::MapfitSeries& s : series)
    summary += s.ste_name + "," + (s.norm ? "on" : "off") + "," + std::to_string(s.seed) + "," +
               scl::format_float(s.final_mse()) + "\n";
  scl::write_file_atomic(out_dir + "/fitmap_summary.csv", summary);
  std::printf("fitmap complete: %zu series under %s\n", series.size(), out_dir.c_str());
  return 0;
}

int cmd_extract(const std::string& run_dir) {
  const std::string model_path = run_dir + "/model.sclz";
  if (!fs::exists(model_path)) {
    std::fprintf(stderr, "no checkpoint at %s\n", model_path.c_str());
    return 1;
  }
  scl::LoadedModel loaded = scl::load_sparse(model_path);

  std::string profile = "layer,density\n";
  const std::vector<double> densities = scl::density_profile(*loaded.net);
  for (size_t l = 0; l < densities.size(); ++l)
    profile += std::to_string(l) + "," + scl::format_float(densities[l]) + "\n";
  scl::write_file_atomic(run_dir + "/density_profile.csv", profile);

  if (loaded.header.arch == "dense_fc") {
    const scl::Tensor heat = scl::input_connection_heatmap(*loaded.net);
    std::string grid;
    for (int64_t r = 0; r < heat.shape[0]; ++r) {
      for (int64_t c = 0; c < heat.shape[1]; ++c)
        grid += (c ? "," : "") + scl::format_float(heat.at(r, c));
      grid += "\n";
    }
    scl::write_file_atomic(run_dir + "/input_heatmap.csv", grid);
  }

  // Eq.22 product re-serialized from the loaded state; byte-stable across
  // repeated extractions.
  scl::save_sparse(*loaded.net, loaded.header, run_dir + "/extracted.sclz");
  std::printf("extracted %s: sparsity %.4f, %zu layers\n", run_dir.c_str(), loaded.header.final_sparsity,
              densities.size());
  return 0;
}

}  // namespace

// Expands `--config file` into the equivalent --key value arguments,
// inserted before the explicit flags so the command line wins. Keys are the
// subcommand's long option names without the leading dashes.
std::vector<std::string> expand_config(const CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args;
  std::string config_path;
  std::string subcommand;
  std::vector<std::string> rest;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config_path = argv[++i];
      continue;
    }
    if (arg.rfind("--config=", 0) == 0) {
      config_path = arg.substr(9);
      continue;
    }
    if (subcommand.empty() && !arg.empty() && arg[0] != '-') {
      subcommand = arg;
      continue;
    }
    rest.push_back(std::move(arg));
  }
  if (!subcommand.empty()) args.push_back(subcommand);
  if (!config_path.empty()) {
    const CLI::App* cmd = subcommand.empty() ? nullptr : app.get_subcommand_no_throw(subcommand);
    if (cmd == nullptr) throw std::runtime_error("--config requires a subcommand");
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot read config file " + config_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
      size_t start = line.find_first_not_of(' ');
      if (start == std::string::npos) continue;
      const auto eq = line.find('=', start);
      if (eq == std::string::npos)
        throw std::runtime_error(config_path + ":" + std::to_string(line_no) + ": expected key=value");
      std::string key = line.substr(start, eq - start);
      while (!key.empty() && key.back() == ' ') key.pop_back();
      std::string value = line.substr(eq + 1);
      const auto vstart = value.find_first_not_of(' ');
      value = vstart == std::string::npos ? "" : value.substr(vstart);
      if (cmd->get_option_no_throw("--" + key) == nullptr) {
        std::string valid;
        for (const CLI::Option* opt : cmd->get_options())
          if (!opt->get_lnames().empty() && opt->get_lnames()[0] != "help")
            valid += "  " + opt->get_lnames()[0] + "\n";
        throw std::runtime_error(config_path + ":" + std::to_string(line_no) + ": unknown config key '" +
                                 key + "'\nvalid keys:\n" + valid);
      }
      args.push_back("--" + key + "=" + value);
    }
  }
  for (std::string& r : rest) args.push_back(std::move(r));
  return args;
}

int main(int argc, char** argv) {
  CLI::App app{"Sparse connectivity learning trainer"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one run and write its artifacts");
  add_train_flags(train_cmd, train_flags);

  TrainFlags sweep_flags;
  std::vector<double> sweep_lambdas = {0.0, 0.01, 0.03, 0.08, 0.1};
  std::vector<uint64_t> sweep_seeds = {1};
  int sweep_jobs = 2;
  bool sweep_baseline = false;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run a lambda1 sweep and write a summary table");
  add_train_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--lambda1-list", sweep_lambdas, "lambda1 values")->capture_default_str();
  sweep_cmd->add_option("--seeds", sweep_seeds, "seeds")->capture_default_str();
  sweep_cmd->add_option("--jobs", sweep_jobs, "concurrent runs")->capture_default_str();
  sweep_cmd->add_flag("--with-baseline", sweep_baseline, "Also run the frozen-mask baseline per seed");

  std::string fit_stes = "relu,clipped_relu,leaky_relu,softplus,identity";
  std::string fit_norm = "both";
  int fit_seeds = 5, fit_steps = 1500, fit_inputs = 128, fit_jobs = 2;
  double fit_lr = 0.05;
  uint64_t fit_seed = 1;
  std::string fit_out = "runs/fitmap";
  CLI::App* fit_cmd = app.add_subcommand("fitmap", "Map-fitting comparison of STEs and normalization");
  fit_cmd->add_option("--ste", fit_stes, "Comma list of STE kinds")->capture_default_str();
  fit_cmd->add_option("--norm", fit_norm, "on, off, or both")->capture_default_str();
  fit_cmd->add_option("--seeds", fit_seeds, "Number of seeds")->capture_default_str();
  fit_cmd->add_option("--steps", fit_steps, "Gradient descent steps")->capture_default_str();
  fit_cmd->add_option("--lr", fit_lr, "Learning rate")->capture_default_str();
  fit_cmd->add_option("--inputs", fit_inputs, "Number of probe inputs")->capture_default_str();
  fit_cmd->add_option("--jobs", fit_jobs, "Worker threads")->capture_default_str();
  fit_cmd->add_option("--seed", fit_seed, "Base seed")->capture_default_str();
  fit_cmd->add_option("--out", fit_out, "Output directory")->capture_default_str();

  std::string extract_dir;
  CLI::App* extract_cmd = app.add_subcommand("extract", "Sparse model, densities, and input heatmap from a run");
  extract_cmd->add_option("--run", extract_dir, "Run directory containing model.sclz")->required();

  try {
    std::vector<std::string> args = expand_config(app, argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (sweep_cmd->parsed())
      return cmd_sweep(sweep_flags, sweep_lambdas, sweep_seeds, sweep_jobs, sweep_baseline);
    if (fit_cmd->parsed())
      return cmd_fitmap(fit_stes, fit_norm, fit_seeds, fit_steps, fit_lr, fit_inputs, fit_jobs, fit_seed,
                        fit_out);
    if (extract_cmd->parsed()) return cmd_extract(extract_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
