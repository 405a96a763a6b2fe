#pragma once

// Training harness: Adam with linear warm-up / linear decay, seeded and
// bit-deterministic per run, best-validation checkpointing, checkpoint
// persistence, and the multi-seed experiment runner.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ifib/data.hpp"
#include "ifib/inference.hpp"
#include "ifib/toml.hpp"

namespace ifib::train {

enum class ModelKind { IfibC, IfibN, Fenn, FullyNN };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

struct ArchConfig {
  int history_dim = 32;  // MS[0]
  int f_dim = 64;        // MS[1]
  int iem_layers = 3;    // MS[2]
  int iem_hidden = 32;
  int embed_dim = 32;
  int chain_dim = 32;    // ifib-n conditioning chain
  bool static_chain = false;
};

struct TrainConfig {
  ModelKind model = ModelKind::IfibC;
  std::string dataset_dir;
  std::uint64_t seed = 1;
  int total_steps = 10000;
  int warmup_steps = 1000;
  int batch_size = 128;
  double learning_rate = 0.002;
  int eval_every = 500;
  ArchConfig arch;

  void validate() const;  // warmup <= total, lr > 0, batch >= 1
};

TrainConfig train_config_from_toml(const toml::Table& table);
TrainConfig load_train_config(const std::string& path);

// Linear ramp to the peak over the warm-up, then linear decay hitting
// exactly zero at total_steps.
double lr_at(const TrainConfig& cfg, int step);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;
};

// Clips the global gradient norm, then applies one Adam update (t is the
// 1-based update count). Nonneg-reparametrized arrays stay positive by
// construction; asserted after the step.
void adam_step(ad::ParamStore& store, const AdamConfig& adam, double lr, int t);

// One trained model of any supported kind behind the shared surface the
// trainer and evaluators need.
class AnyModel {
 public:
  AnyModel(ModelKind kind, const ArchConfig& arch, const data::DatasetMeta& meta,
           std::uint64_t seed);
  AnyModel(ModelKind kind, const ArchConfig& arch, const data::DatasetMeta& meta,
           ad::ParamStore store);

  ModelKind kind() const { return kind_; }
  const ArchConfig& arch() const { return arch_; }
  const data::DatasetMeta& meta() const { return meta_; }
  ad::ParamStore& params();
  const ad::ParamStore& params() const;

  ad::Var batch_nll(ad::Tape& tape, const models::Batch& batch) const;

  // Typed access; throws on a kind mismatch.
  const models::IfibCModel& ifib_c() const;
  const models::IfibNModel& ifib_n() const;
  const models::FennModel& fenn() const;

 private:
  ModelKind kind_;
  ArchConfig arch_;
  data::DatasetMeta meta_;
  std::unique_ptr<models::IfibCModel> ifib_c_;
  std::unique_ptr<models::IfibNModel> ifib_n_;
  std::unique_ptr<models::FennModel> fenn_;
};

struct Checkpoint {
  int version = 1;
  ModelKind kind = ModelKind::IfibC;
  ArchConfig arch;
  data::DatasetMeta meta;
  int step = 0;
  double val_nll = 0.0;
  std::string rng_state;
  // name / constraint / values in registration order
  struct Array {
    std::string name;
    bool nonneg = false;
    models::Mat raw;
  };
  std::vector<Array> arrays;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint checkpoint_of(const AnyModel& model, int step, double val_nll,
                         const std::string& rng_state);
AnyModel model_from_checkpoint(const Checkpoint& ckpt);

struct LogRow {
  int step = 0;
  double lr = 0.0;
  double train_nll = 0.0;
  double val_nll = 0.0;
};

struct TrainResult {
  Checkpoint best;          // best-validation parameters
  double best_val_nll = 0.0;
  int best_step = 0;
  std::vector<LogRow> log;
};

// Deterministic given cfg.seed. Throws with the step number on a non-finite
// loss. When out_dir is nonempty, writes checkpoint.json and metrics.csv.
TrainResult train(const TrainConfig& cfg, const data::SplitDataset& ds,
                  const std::string& out_dir = "");

// Mean per-event NLL of a split under the current parameters.
double evaluate_nll(const AnyModel& model, const std::vector<data::EventSequence>& seqs,
                    int batch_size);

// ------------------------------------------------------------- experiments

struct ExperimentSpec {
  std::string dataset_dir;
  std::string truth_path;
  std::vector<ModelKind> models;
  std::vector<std::uint64_t> seeds;  // empty: 10 for ifib-c on poisson, else 3
  TrainConfig base;                  // model/dataset fields overwritten per run
  int fidelity_grid = 500;
};

ExperimentSpec load_experiment_spec(const std::string& path);

struct ExperimentRun {
  ModelKind model;
  std::uint64_t seed;
  double spearman = 0.0, l1 = 0.0, relative_nll = 0.0, val_nll = 0.0;
};

struct ExperimentReport {
  std::vector<ExperimentRun> runs;
  struct Aggregate {
    ModelKind model;
    double spearman_mean = 0.0, spearman_std = 0.0;
    double l1_mean = 0.0, l1_std = 0.0;
    double relative_nll_mean = 0.0, relative_nll_std = 0.0;
  };
  std::vector<Aggregate> aggregates;
};

ExperimentReport run_experiment(const ExperimentSpec& spec, const std::string& out_dir = "");
void save_experiment_report(const ExperimentReport& report, const std::string& path);

// Fidelity of a trained model against the exact truth oracle on the test
// split (the Table-3 style evaluation at desk scale).
metrics::FidelityReport evaluate_fidelity(const AnyModel& model, const synth::TruthProcess& truth,
                                          const data::SplitDataset& ds, int grid_points = 500);

}  // namespace ifib::train
