#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uil/envinfer.hpp"
#include "uil/graphon.hpp"
#include "uil/model.hpp"
#include "uil/objective.hpp"

namespace uil {

// uil_no_gl drops the structural (graphon) term; uil_no_sem drops the
// semantic mixing term; erm trains the plain encoder with cross-entropy.
enum class RunMode { uil, erm, uil_no_gl, uil_no_sem };

std::string mode_name(RunMode m);
RunMode parse_mode(const std::string& name);

struct RunConfig {
  std::string train_data;
  std::string test_data;
  uint64_t seed = 1;
  int epochs = 100;
  int batch_size = 128;        // one of 32, 64, 128, 256
  double learning_rate = 1e-3; // one of 1e-2, 1e-3, 1e-4
  double alpha = 0.5;          // in [0.1, 1.5]
  double beta = 0.5;           // in [0.1, 1.5]
  double rho_init = 0.7;       // in [0.5, 1.0]
  int env_k = 3;               // in [2, 6]
  int resolution = 12;         // graphon block count during training
  RunMode mode = RunMode::uil;
  int layers = 3;
  int hidden = 32;
  // Epochs that keep the initial random environment assignment before
  // k-means starts re-inferring at every epoch boundary.
  int warmup_epochs = 5;
};

void validate_run_config(const RunConfig& c);

// Flat `key = value` file (# comments); overrides are "key=value" strings
// applied on top, matching the --set flag.
RunConfig parse_run_config(const std::string& path, const std::vector<std::string>& overrides);
RunConfig run_config_from_overrides(const std::vector<std::string>& overrides);

struct MetricRecord {
  int epoch = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double mask_auc = 0.5;  // 0.5 for maskless modes (all-tied scores)
  LossBreakdown losses;   // averaged over the epoch's steps
  double rho = 0.0;
  double seconds = 0.0;
};

// First-order adaptive-gradient optimizer (decay 0.9 / 0.999).
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<Mat> m, v;

  explicit Adam(double learning_rate) : lr(learning_rate) {}
  void step(ModelParams& params, const std::vector<Mat>& grads);
};

// One inference sweep over a dataset. h_en rows align with ds.graphs
// (zeros when the mode has no environmental branch).
struct DatasetEval {
  double accuracy = 0.0;
  Mat h_en;
  std::vector<StableMasks> masks;  // filled only when requested
};

DatasetEval evaluate_dataset(const ModelParams& params, const Dataset& ds, bool clamp_masks,
                             bool want_env, bool want_masks);

double evaluate_accuracy(const ModelParams& params, const Dataset& ds, bool clamp_masks = false);

// Rank-statistic ROC-AUC with averaged ties over (score, positive) pairs.
double auc_from_pool(std::vector<std::pair<double, int>> pool);

// Pools every existing edge of every graph; score = learned edge mask,
// positive = ground-truth stable flag.
double mask_auc(const ModelParams& params, const Dataset& ds);

struct TrainResult {
  ModelParams params;
  std::vector<MetricRecord> history;
  GraphonBufferState buffers;
};

// Full training loop. Mutates nothing outside its own copies; with a
// non-empty out_dir writes losses.jsonl, metrics.jsonl, and per-epoch
// environment assignments. Deterministic under (config, seed, data).
// Throws on non-finite loss, naming the offending step.
TrainResult train(const RunConfig& config, Dataset train_ds, const Dataset& test_ds,
                  const std::string& out_dir = "");

enum class FeatureSource { full, gt_stable, gt_env, learned_stable };

std::string feature_source_name(FeatureSource s);

// Pairwise environment distance table: Dis(e_i, e_j) averages, over
// classes, the cut distance between the (class, env) group graphons built
// from the chosen feature source. Environments are the ground-truth tags.
// Resolution <= 6 uses exact cut distance, larger uses annealing.
struct DisTable {
  int num_envs = 0;
  Mat dis;  // K x K, symmetric, zero diagonal
  // (env_i, env_j, class) triples skipped because a group was empty.
  std::vector<std::array<int, 3>> skipped;

  double mean_offdiag() const;
};

DisTable dis_table(const Dataset& ds, FeatureSource source, const ModelParams* params,
                   int resolution);

// gen/train/eval/dis pipeline for one configuration; writes report.json,
// metrics.jsonl, a final checkpoint, and group-graphon CSVs into out_dir.
void run_experiment(const RunConfig& config, const std::string& out_dir);

}  // namespace uil
