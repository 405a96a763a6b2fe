#include "ifib/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ifib::train {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "ifib-c") return ModelKind::IfibC;
  if (s == "ifib-n") return ModelKind::IfibN;
  if (s == "fenn") return ModelKind::Fenn;
  if (s == "fullynn") return ModelKind::FullyNN;
  throw std::invalid_argument("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::IfibC: return "ifib-c";
    case ModelKind::IfibN: return "ifib-n";
    case ModelKind::Fenn: return "fenn";
    case ModelKind::FullyNN: return "fullynn";
  }
  throw std::logic_error("bad ModelKind");
}

void TrainConfig::validate() const {
  if (warmup_steps > total_steps)
    throw std::invalid_argument("train: warmup_steps must be <= total_steps");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (total_steps < 0 || warmup_steps < 0) throw std::invalid_argument("train: negative steps");
}

TrainConfig train_config_from_toml(const toml::Table& t) {
  TrainConfig cfg;
  cfg.model = model_kind_from_string(t.get_string("model", "ifib-c"));
  cfg.dataset_dir = t.get_string("dataset", "");
  cfg.seed = static_cast<std::uint64_t>(t.get_int("seed", 1));
  cfg.total_steps = static_cast<int>(t.get_int("total_steps", 10000));
  cfg.warmup_steps = static_cast<int>(t.get_int("warmup_steps", 1000));
  cfg.batch_size = static_cast<int>(t.get_int("batch_size", 128));
  cfg.learning_rate = t.get_double("learning_rate", 0.002);
  cfg.eval_every = static_cast<int>(t.get_int("eval_every", 500));
  cfg.arch.history_dim = static_cast<int>(t.get_int("arch.history_dim", 32));
  cfg.arch.f_dim = static_cast<int>(t.get_int("arch.f_dim", 64));
  cfg.arch.iem_layers = static_cast<int>(t.get_int("arch.iem_layers", 3));
  cfg.arch.iem_hidden = static_cast<int>(t.get_int("arch.iem_hidden", 32));
  cfg.arch.embed_dim = static_cast<int>(t.get_int("arch.embed_dim", 32));
  cfg.arch.chain_dim = static_cast<int>(t.get_int("arch.chain_dim", 32));
  cfg.arch.static_chain = t.get_bool("arch.static_chain", false);
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  return train_config_from_toml(toml::parse_file(path));
}

double lr_at(const TrainConfig& cfg, int step) {
  if (cfg.total_steps == 0) return cfg.learning_rate;
  if (step < cfg.warmup_steps)
    return cfg.learning_rate * static_cast<double>(step + 1) /
           static_cast<double>(cfg.warmup_steps);
  int decay_len = cfg.total_steps - cfg.warmup_steps;
  if (decay_len == 0) return step >= cfg.total_steps ? 0.0 : cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(decay_len);
}

void adam_step(ad::ParamStore& store, const AdamConfig& adam, double lr, int t) {
  double norm_sq = 0.0;
  for (int i = 0; i < store.size(); ++i) norm_sq += store.at(i).grad.squaredNorm();
  double scale = 1.0;
  double norm = std::sqrt(norm_sq);
  if (norm > adam.clip_norm) scale = adam.clip_norm / norm;

  double bc1 = 1.0 - std::pow(adam.beta1, t);
  double bc2 = 1.0 - std::pow(adam.beta2, t);
  for (int i = 0; i < store.size(); ++i) {
    ad::ParamArray& a = store.at(i);
    if (a.adam_m.size() == 0) {
      a.adam_m = models::Mat::Zero(a.raw.rows(), a.raw.cols());
      a.adam_v = models::Mat::Zero(a.raw.rows(), a.raw.cols());
    }
    models::Mat g = a.grad * scale;
    a.adam_m = adam.beta1 * a.adam_m + (1.0 - adam.beta1) * g;
    a.adam_v = (adam.beta2 * a.adam_v).eval() +
               (1.0 - adam.beta2) * g.cwiseProduct(g);
    models::Mat m_hat = a.adam_m / bc1;
    models::Mat v_hat = a.adam_v / bc2;
    a.raw -= lr * (m_hat.array() / (v_hat.array().sqrt() + adam.eps)).matrix();
  }
  store.check_nonneg();
}

// -------------------------------------------------------------------- model

namespace {

models::EncoderConfig encoder_config(const ArchConfig& arch, const data::DatasetMeta& meta) {
  models::EncoderConfig enc;
  enc.mark_kind = meta.mark_kind;
  enc.num_marks = meta.num_marks;
  enc.mark_dims = meta.dims;
  enc.d_embed = arch.embed_dim;
  enc.d_hidden = arch.history_dim;
  return enc;
}

void check_kind_matches(ModelKind kind, const data::DatasetMeta& meta) {
  bool needs_numeric = kind == ModelKind::IfibN;
  bool is_numeric = meta.mark_kind == data::MarkKind::Numeric;
  if (needs_numeric != is_numeric)
    throw std::invalid_argument("model kind " + to_string(kind) +
                                " does not match the dataset's mark kind");
}

}  // namespace

AnyModel::AnyModel(ModelKind kind, const ArchConfig& arch, const data::DatasetMeta& meta,
                   std::uint64_t seed)
    : kind_(kind), arch_(arch), meta_(meta) {
  check_kind_matches(kind, meta);
  switch (kind) {
    case ModelKind::IfibC: {
      models::IfibCConfig cfg;
      cfg.encoder = encoder_config(arch, meta);
      cfg.d_f = arch.f_dim;
      cfg.iem_hidden = arch.iem_hidden;
      cfg.iem_layers = arch.iem_layers;
      ifib_c_ = std::make_unique<models::IfibCModel>(cfg, seed);
      break;
    }
    case ModelKind::IfibN: {
      models::IfibNConfig cfg;
      cfg.encoder = encoder_config(arch, meta);
      cfg.bounds = meta.bounds;
      cfg.d_u = arch.chain_dim;
      cfg.d_f = arch.f_dim;
      cfg.iem_hidden = arch.iem_hidden;
      cfg.iem_layers = arch.iem_layers;
      cfg.static_chain = arch.static_chain;
      ifib_n_ = std::make_unique<models::IfibNModel>(cfg, seed);
      break;
    }
    case ModelKind::Fenn:
    case ModelKind::FullyNN: {
      models::FennConfig cfg;
      cfg.encoder = encoder_config(arch, meta);
      cfg.d_f = arch.f_dim;
      cfg.iem_hidden = arch.iem_hidden;
      cfg.iem_layers = arch.iem_layers;
      cfg.shared_v = kind == ModelKind::FullyNN;
      fenn_ = std::make_unique<models::FennModel>(cfg, seed);
      break;
    }
  }
}

AnyModel::AnyModel(ModelKind kind, const ArchConfig& arch, const data::DatasetMeta& meta,
                   ad::ParamStore store)
    : AnyModel(kind, arch, meta, std::uint64_t{0}) {
  // replace the fresh parameters with the provided ones, shape-checked
  ad::ParamStore& mine = params();
  if (mine.size() != store.size())
    throw std::runtime_error("checkpoint: parameter array count mismatch");
  for (int i = 0; i < mine.size(); ++i) {
    if (mine.at(i).name != store.at(i).name ||
        mine.at(i).raw.rows() != store.at(i).raw.rows() ||
        mine.at(i).raw.cols() != store.at(i).raw.cols())
      throw std::runtime_error("checkpoint: parameter mismatch at " + mine.at(i).name);
    mine.at(i).raw = store.at(i).raw;
  }
}

ad::ParamStore& AnyModel::params() {
  if (ifib_c_) return ifib_c_->params();
  if (ifib_n_) return ifib_n_->params();
  return fenn_->params();
}

const ad::ParamStore& AnyModel::params() const {
  if (ifib_c_) return ifib_c_->params();
  if (ifib_n_) return ifib_n_->params();
  return fenn_->params();
}

ad::Var AnyModel::batch_nll(ad::Tape& tape, const models::Batch& batch) const {
  if (ifib_c_) return ifib_c_->batch_nll(tape, batch);
  if (ifib_n_) return ifib_n_->batch_nll(tape, batch);
  return fenn_->batch_nll(tape, batch);
}

const models::IfibCModel& AnyModel::ifib_c() const {
  if (!ifib_c_) throw std::runtime_error("checkpoint holds a " + to_string(kind_) +
                                         " model, not ifib-c");
  return *ifib_c_;
}

const models::IfibNModel& AnyModel::ifib_n() const {
  if (!ifib_n_) throw std::runtime_error("checkpoint holds a " + to_string(kind_) +
                                         " model, not ifib-n");
  return *ifib_n_;
}

const models::FennModel& AnyModel::fenn() const {
  if (!fenn_) throw std::runtime_error("checkpoint holds a " + to_string(kind_) +
                                       " model, not fenn/fullynn");
  return *fenn_;
}

// --------------------------------------------------------------- checkpoint

namespace {

json meta_to_json(const data::DatasetMeta& meta) {
  json j;
  if (meta.mark_kind == data::MarkKind::Categorical) {
    j["mark_kind"] = "categorical";
    j["num_marks"] = meta.num_marks;
  } else {
    j["mark_kind"] = "numeric";
    j["dims"] = meta.dims;
    j["bounds"] = json::array();
    for (auto& [a, b] : meta.bounds) j["bounds"].push_back({a, b});
  }
  if (meta.normalization)
    j["normalization"] = {{"mean", meta.normalization->mean}, {"std", meta.normalization->std}};
  else
    j["normalization"] = nullptr;
  if (meta.inception_offset)
    j["inception_offset"] = *meta.inception_offset;
  else
    j["inception_offset"] = nullptr;
  return j;
}

data::DatasetMeta meta_from_json(const json& j) {
  data::DatasetMeta meta;
  if (j.at("mark_kind") == "categorical") {
    meta.mark_kind = data::MarkKind::Categorical;
    meta.num_marks = j.at("num_marks").get<int>();
  } else {
    meta.mark_kind = data::MarkKind::Numeric;
    meta.dims = j.at("dims").get<int>();
    for (const auto& b : j.at("bounds"))
      meta.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
  }
  if (j.contains("normalization") && !j.at("normalization").is_null())
    meta.normalization = data::NormStats{j.at("normalization").at("mean").get<double>(),
                                         j.at("normalization").at("std").get<double>()};
  if (j.contains("inception_offset") && !j.at("inception_offset").is_null())
    meta.inception_offset = j.at("inception_offset").get<double>();
  return meta;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json j;
  j["version"] = ckpt.version;
  j["model"] = to_string(ckpt.kind);
  j["arch"] = {{"history_dim", ckpt.arch.history_dim}, {"f_dim", ckpt.arch.f_dim},
               {"iem_layers", ckpt.arch.iem_layers},   {"iem_hidden", ckpt.arch.iem_hidden},
               {"embed_dim", ckpt.arch.embed_dim},     {"chain_dim", ckpt.arch.chain_dim},
               {"static_chain", ckpt.arch.static_chain}};
  j["meta"] = meta_to_json(ckpt.meta);
  j["step"] = ckpt.step;
  j["val_nll"] = ckpt.val_nll;
  j["rng"] = ckpt.rng_state;
  j["params"] = json::array();
  for (const auto& a : ckpt.arrays) {
    json pj;
    pj["name"] = a.name;
    pj["nonneg"] = a.nonneg;
    pj["rows"] = a.raw.rows();
    pj["cols"] = a.raw.cols();
    std::vector<double> flat(a.raw.size());
    Eigen::Map<models::Mat>(flat.data(), a.raw.rows(), a.raw.cols()) = a.raw;
    pj["data"] = flat;
    j["params"].push_back(std::move(pj));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("corrupt checkpoint " + path + ": " + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.version = j.at("version").get<int>();
    if (ckpt.version != 1)
      throw std::runtime_error("checkpoint version mismatch: got " +
                               std::to_string(ckpt.version));
    ckpt.kind = model_kind_from_string(j.at("model").get<std::string>());
    const json& a = j.at("arch");
    ckpt.arch.history_dim = a.at("history_dim").get<int>();
    ckpt.arch.f_dim = a.at("f_dim").get<int>();
    ckpt.arch.iem_layers = a.at("iem_layers").get<int>();
    ckpt.arch.iem_hidden = a.at("iem_hidden").get<int>();
    ckpt.arch.embed_dim = a.at("embed_dim").get<int>();
    ckpt.arch.chain_dim = a.at("chain_dim").get<int>();
    ckpt.arch.static_chain = a.at("static_chain").get<bool>();
    ckpt.meta = meta_from_json(j.at("meta"));
    ckpt.step = j.at("step").get<int>();
    ckpt.val_nll = j.at("val_nll").get<double>();
    ckpt.rng_state = j.at("rng").get<std::string>();
    for (const auto& pj : j.at("params")) {
      Checkpoint::Array arr;
      arr.name = pj.at("name").get<std::string>();
      arr.nonneg = pj.at("nonneg").get<bool>();
      int rows = pj.at("rows").get<int>();
      int cols = pj.at("cols").get<int>();
      std::vector<double> flat = pj.at("data").get<std::vector<double>>();
      if (static_cast<int>(flat.size()) != rows * cols)
        throw std::runtime_error("checkpoint array size mismatch at " + arr.name);
      arr.raw = Eigen::Map<models::Mat>(flat.data(), rows, cols);
      ckpt.arrays.push_back(std::move(arr));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint " + path + ": " + e.what());
  }
  return ckpt;
}

Checkpoint checkpoint_of(const AnyModel& model, int step, double val_nll,
                         const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.kind = model.kind();
  ckpt.arch = model.arch();
  ckpt.meta = model.meta();
  ckpt.step = step;
  ckpt.val_nll = val_nll;
  ckpt.rng_state = rng_state;
  const ad::ParamStore& store = model.params();
  for (int i = 0; i < store.size(); ++i) {
    const ad::ParamArray& a = store.at(i);
    ckpt.arrays.push_back(
        {a.name, a.constraint == ad::Constraint::NonnegReparam, a.raw});
  }
  return ckpt;
}

AnyModel model_from_checkpoint(const Checkpoint& ckpt) {
  ad::ParamStore store;
  for (const auto& a : ckpt.arrays)
    store.add(a.name, a.raw,
              a.nonneg ? ad::Constraint::NonnegReparam : ad::Constraint::Free);
  return AnyModel(ckpt.kind, ckpt.arch, ckpt.meta, std::move(store));
}

// ----------------------------------------------------------------- training

double evaluate_nll(const AnyModel& model, const std::vector<data::EventSequence>& seqs,
                    int batch_size) {
  double total = 0.0;
  size_t events = 0;
  std::vector<size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<size_t> chunk(order.begin() + start,
                              order.begin() + std::min(order.size(), start + batch_size));
    models::Batch batch = models::make_batch(model.meta(), seqs, chunk);
    int n = batch.valid_count();
    if (n == 0) continue;
    ad::Tape tape(const_cast<ad::ParamStore*>(&model.params()));
    total += tape.scalar_value(model.batch_nll(tape, batch)) * n;
    events += n;
  }
  if (events == 0) throw std::invalid_argument("evaluate_nll: no events");
  return total / static_cast<double>(events);
}

TrainResult train(const TrainConfig& cfg, const data::SplitDataset& ds,
                  const std::string& out_dir) {
  cfg.validate();
  check_kind_matches(cfg.model, ds.meta);
  if (ds.train.empty()) throw std::invalid_argument("train: empty training split");

  AnyModel model(cfg.model, cfg.arch, ds.meta, cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0x7261696eull);

  // buckets of similar lengths keep padding small; their order reshuffles
  // every epoch
  std::vector<size_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return ds.train[a].size() != ds.train[b].size() ? ds.train[a].size() < ds.train[b].size()
                                                    : a < b;
  });
  std::vector<std::vector<size_t>> buckets;
  for (size_t start = 0; start < order.size(); start += cfg.batch_size)
    buckets.emplace_back(order.begin() + start,
                         order.begin() + std::min(order.size(), start + cfg.batch_size));

  AdamConfig adam;
  TrainResult result;
  std::vector<size_t> bucket_order(buckets.size());
  std::iota(bucket_order.begin(), bucket_order.end(), size_t{0});
  size_t cursor = bucket_order.size();  // trigger shuffle on first use

  auto val_nll_now = [&]() {
    return ds.validation.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : evaluate_nll(model, ds.validation, cfg.batch_size);
  };

  double best_val = std::numeric_limits<double>::infinity();
  int best_step = 0;
  Checkpoint best = checkpoint_of(model, 0, 0.0, "");

  if (cfg.total_steps == 0) {
    double v = val_nll_now();
    best = checkpoint_of(model, 0, v, "");
    result.best = best;
    result.best_val_nll = v;
  }

  double last_train_nll = 0.0;
  for (int step = 0; step < cfg.total_steps; ++step) {
    if (cursor >= bucket_order.size()) {
      std::shuffle(bucket_order.begin(), bucket_order.end(), rng);
      cursor = 0;
    }
    const std::vector<size_t>& chunk = buckets[bucket_order[cursor++]];
    models::Batch batch = models::make_batch(ds.meta, ds.train, chunk);

    model.params().zero_grad();
    ad::Tape tape(&model.params());
    try {
      ad::Var loss = model.batch_nll(tape, batch);
      last_train_nll = tape.scalar_value(loss);
      tape.backward(loss);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("training diverged at step " + std::to_string(step) + ": " +
                               e.what());
    }
    adam_step(model.params(), adam, lr_at(cfg, step), step + 1);

    bool last = step + 1 == cfg.total_steps;
    if ((cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) || last) {
      double v = val_nll_now();
      result.log.push_back({step + 1, lr_at(cfg, step), last_train_nll, v});
      if (!std::isnan(v) && v < best_val) {
        best_val = v;
        best_step = step + 1;
        std::ostringstream rs;
        rs << rng;
        best = checkpoint_of(model, step + 1, v, rs.str());
      }
    }
  }
  if (cfg.total_steps > 0) {
    if (std::isinf(best_val)) {  // no validation split: keep the final state
      std::ostringstream rs;
      rs << rng;
      best = checkpoint_of(model, cfg.total_steps, last_train_nll, rs.str());
      best_val = last_train_nll;
      best_step = cfg.total_steps;
    }
    result.best = best;
    result.best_val_nll = best_val;
    result.best_step = best_step;
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_checkpoint(result.best, (fs::path(out_dir) / "checkpoint.json").string());
    std::ofstream log(fs::path(out_dir) / "metrics.csv");
    log << "step,lr,train_nll,val_nll\n";
    log.precision(12);
    for (const auto& row : result.log)
      log << row.step << ',' << row.lr << ',' << row.train_nll << ',' << row.val_nll << '\n';
  }
  return result;
}

// -------------------------------------------------------------- experiments

ExperimentSpec load_experiment_spec(const std::string& path) {
  toml::Table t = toml::parse_file(path);
  ExperimentSpec spec;
  spec.dataset_dir = t.get_string("dataset");
  spec.truth_path = t.get_string("truth", "");
  for (const auto& m : t.get_string_array("models"))
    spec.models.push_back(model_kind_from_string(m));
  if (t.has("seeds"))
    for (auto s : t.get_int_array("seeds")) spec.seeds.push_back(static_cast<std::uint64_t>(s));
  spec.fidelity_grid = static_cast<int>(t.get_int("fidelity_grid", 500));
  spec.base = train_config_from_toml(t);
  spec.base.dataset_dir = spec.dataset_dir;
  return spec;
}

metrics::FidelityReport evaluate_fidelity(const AnyModel& model, const synth::TruthProcess& truth,
                                          const data::SplitDataset& ds, int grid_points) {
  infer::FidelityOptions opt;
  opt.grid_points = grid_points;
  opt.window = infer::horizon_cap(ds.train);
  double t_max = opt.window;

  if (ds.meta.mark_kind == data::MarkKind::Categorical) {
    infer::LawFactory truth_factory = [&](const data::EventSequence& seq, size_t prefix) {
      std::vector<double> hist(seq.times.begin(), seq.times.begin() + prefix);
      return std::make_unique<infer::TruthLaw>(truth, hist);
    };
    infer::LawFactory model_factory;
    switch (model.kind()) {
      case ModelKind::IfibC:
        model_factory = [&](const data::EventSequence& seq, size_t prefix) {
          auto states = model.ifib_c().encode(seq, prefix);
          return std::make_unique<infer::IfibCLaw>(model.ifib_c(), states.back());
        };
        break;
      case ModelKind::Fenn:
      case ModelKind::FullyNN:
        model_factory = [&, t_max](const data::EventSequence& seq, size_t prefix) {
          auto states = model.fenn().encode(seq, prefix);
          return std::make_unique<infer::FennLaw>(model.fenn(), states.back(), t_max, 1000);
        };
        break;
      default:
        throw std::invalid_argument("categorical fidelity needs a categorical model");
    }
    return infer::fidelity_report(model_factory, truth_factory, ds.test, opt);
  }

  if (model.kind() != ModelKind::IfibN)
    throw std::invalid_argument("numeric fidelity needs an ifib-n model");
  infer::LawFactoryN truth_factory = [&](const data::EventSequence& seq, size_t prefix) {
    std::vector<double> hist(seq.times.begin(), seq.times.begin() + prefix);
    return std::make_unique<infer::TruthLawN>(truth, hist);
  };
  infer::LawFactoryN model_factory = [&](const data::EventSequence& seq, size_t prefix) {
    auto states = model.ifib_n().encode(seq, prefix);
    return std::make_unique<infer::IfibNLaw>(model.ifib_n(), states.back());
  };
  return infer::fidelity_report_n(model_factory, truth_factory, ds.test, opt);
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const std::string& out_dir) {
  if (spec.models.empty()) throw std::invalid_argument("experiment: no models");
  data::SplitDataset ds = data::load_dataset(spec.dataset_dir);
  synth::TruthProcess truth = synth::load_truth(spec.truth_path);

  ExperimentReport report;
  for (ModelKind kind : spec.models) {
    std::vector<std::uint64_t> seeds = spec.seeds;
    if (seeds.empty()) {
      // convention: 10 repetitions for ifib-c on poisson, 3 otherwise
      int n = (kind == ModelKind::IfibC && truth.kind == synth::ProcessKind::Poisson) ? 10 : 3;
      for (int i = 1; i <= n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
    }
    if (seeds.empty()) throw std::invalid_argument("experiment: empty seed list");

    std::vector<ExperimentRun> runs;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = spec.base;
      cfg.model = kind;
      cfg.seed = seed;
      std::string run_dir;
      if (!out_dir.empty())
        run_dir = (fs::path(out_dir) / (to_string(kind) + "_seed" + std::to_string(seed)))
                      .string();
      TrainResult tr = train(cfg, ds, run_dir);
      AnyModel best = model_from_checkpoint(tr.best);
      metrics::FidelityReport fr = evaluate_fidelity(best, truth, ds, spec.fidelity_grid);
      runs.push_back({kind, seed, fr.spearman, fr.l1, fr.relative_nll, tr.best_val_nll});
    }
    report.runs.insert(report.runs.end(), runs.begin(), runs.end());

    auto mean_std = [&](auto getter) {
      double mean = 0.0;
      for (auto& r : runs) mean += getter(r);
      mean /= runs.size();
      double var = 0.0;
      for (auto& r : runs) var += (getter(r) - mean) * (getter(r) - mean);
      double std = runs.size() > 1 ? std::sqrt(var / (runs.size() - 1)) : 0.0;
      return std::pair<double, double>(mean, std);
    };
    ExperimentReport::Aggregate agg;
    agg.model = kind;
    std::tie(agg.spearman_mean, agg.spearman_std) =
        mean_std([](const ExperimentRun& r) { return r.spearman; });
    std::tie(agg.l1_mean, agg.l1_std) = mean_std([](const ExperimentRun& r) { return r.l1; });
    std::tie(agg.relative_nll_mean, agg.relative_nll_std) =
        mean_std([](const ExperimentRun& r) { return r.relative_nll; });
    report.aggregates.push_back(agg);
  }
  if (!out_dir.empty())
    save_experiment_report(report, (fs::path(out_dir) / "report.json").string());
  return report;
}

void save_experiment_report(const ExperimentReport& report, const std::string& path) {
  json j;
  j["runs"] = json::array();
  for (const auto& r : report.runs)
    j["runs"].push_back({{"model", to_string(r.model)},
                         {"seed", r.seed},
                         {"spearman", r.spearman},
                         {"l1", r.l1},
                         {"relative_nll", r.relative_nll},
                         {"val_nll", r.val_nll}});
  j["aggregates"] = json::array();
  for (const auto& a : report.aggregates)
    j["aggregates"].push_back({{"model", to_string(a.model)},
                               {"spearman_mean", a.spearman_mean},
                               {"spearman_std", a.spearman_std},
                               {"l1_mean", a.l1_mean},
                               {"l1_std", a.l1_std},
                               {"relative_nll_mean", a.relative_nll_mean},
                               {"relative_nll_std", a.relative_nll_std}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace ifib::train
