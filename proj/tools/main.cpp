// Command-line front end: dataset generation, training, evaluation,
// prediction, density-curve probes, and the marginal-sum diagnostic.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ifib/inference.hpp"
#include "ifib/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ifib;

namespace {

synth::MarkScheme parse_marks(const std::string& spec, const std::string& scheme) {
  synth::MarkScheme marks;
  auto colon = spec.find(':');
  std::string kind = spec.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "categorical") {
    marks.kind = synth::MarkScheme::Kind::UniformCategorical;
    marks.num_marks = rest.empty() ? 5 : std::stoi(rest);
    return marks;
  }
  if (kind != "numeric") throw CLI::ValidationError("--marks", "expected categorical:K or numeric:box");
  marks.kind = scheme == "wheel" ? synth::MarkScheme::Kind::SpinningWheel
                                 : synth::MarkScheme::Kind::UniformBox;
  // box spec: lo,hi per dimension, dimensions joined by 'x', e.g. 0,1x0,1
  size_t pos = 0;
  while (pos < rest.size()) {
    size_t x = rest.find('x', pos);
    std::string dim = rest.substr(pos, x == std::string::npos ? std::string::npos : x - pos);
    size_t comma = dim.find(',');
    if (comma == std::string::npos)
      throw CLI::ValidationError("--marks", "each dimension needs lo,hi");
    marks.bounds.emplace_back(std::stod(dim.substr(0, comma)), std::stod(dim.substr(comma + 1)));
    if (x == std::string::npos) break;
    pos = x + 1;
  }
  if (marks.bounds.empty()) throw CLI::ValidationError("--marks", "numeric marks need a box");
  return marks;
}

std::vector<size_t> parse_counts(const std::string& s) {
  std::vector<size_t> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t comma = s.find(',', pos);
    out.push_back(std::stoul(s.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.size() != 3) throw CLI::ValidationError("--counts", "expected train,val,test");
  return out;
}

json quantiles_json(const metrics::Quantiles& q) {
  return {{"q25", q.q25}, {"q50", q.q50}, {"q75", q.q75}};
}

infer::PredictorConfig predictor_config(const data::SplitDataset& ds) {
  infer::PredictorConfig cfg;
  cfg.t_max = infer::horizon_cap(ds.train);
  return cfg;
}

int cmd_generate(const std::string& process, const std::string& marks_spec,
                 const std::string& scheme, const std::string& counts_spec, std::uint64_t seed,
                 double horizon, size_t max_events, const std::string& out) {
  synth::TruthProcess p;
  synth::ProcessKind kind = synth::process_kind_from_string(process);
  switch (kind) {
    case synth::ProcessKind::Hawkes1: p = synth::TruthProcess::hawkes1(); break;
    case synth::ProcessKind::Hawkes2: p = synth::TruthProcess::hawkes2(); break;
    case synth::ProcessKind::Poisson: p = synth::TruthProcess::poisson(1.0); break;
    case synth::ProcessKind::SelfCorrect: p = synth::TruthProcess::self_correct(); break;
    case synth::ProcessKind::StationaryRenewal: p = synth::TruthProcess::renewal(); break;
  }
  p.marks = parse_marks(marks_spec, scheme);
  if (p.marks.kind != synth::MarkScheme::Kind::UniformCategorical) {
    // continuous-marked convention: poisson rate 0.75, self-correct mu 1.5
    if (kind == synth::ProcessKind::Poisson) p.poisson_rate = 0.75;
    if (kind == synth::ProcessKind::SelfCorrect) p.sc_mu = 1.5;
  }
  auto counts = parse_counts(counts_spec);
  synth::SimulateOptions opt;
  opt.horizon = horizon;
  opt.max_events = max_events;
  data::SplitDataset ds =
      synth::generate_dataset(p, {counts[0], counts[1], counts[2]}, opt, seed);
  data::save_dataset(ds, out);
  synth::save_truth(p, (fs::path(out) / "truth.json").string());
  std::cout << "wrote " << ds.train.size() << "/" << ds.validation.size() << "/"
            << ds.test.size() << " sequences (" << ds.total_events() << " events) to " << out
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out) {
  train::TrainConfig cfg = train::load_train_config(config_path);
  data::SplitDataset ds = data::load_dataset(cfg.dataset_dir);
  train::TrainResult result = train::train(cfg, ds, out);
  std::cout << "best validation nll " << result.best_val_nll << " at step " << result.best_step
            << "; checkpoint in " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset, const std::string& truth,
             const std::string& report_path) {
  train::AnyModel model = train::model_from_checkpoint(train::load_checkpoint(ckpt_path));
  data::SplitDataset ds = data::load_dataset(dataset);
  synth::TruthProcess p = synth::load_truth(truth);
  metrics::FidelityReport report = train::evaluate_fidelity(model, p, ds);
  json j;
  j["spearman"] = report.spearman;
  j["l1"] = report.l1;
  j["relative_nll"] = report.relative_nll;
  j["per_sequence"] = json::array();
  for (const auto& s : report.per_sequence)
    j["per_sequence"].push_back({{"spearman", s.spearman},
                                 {"l1", s.l1},
                                 {"relative_nll", s.relative_nll},
                                 {"prefixes", s.prefixes}});
  std::ofstream out(report_path);
  if (!out) throw std::runtime_error("cannot write " + report_path);
  out << j.dump(2) << '\n';
  std::cout << "spearman " << report.spearman << "  l1 " << report.l1 << "  relative_nll "
            << report.relative_nll << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& dataset, const std::string& task,
                const std::string& report_path) {
  train::AnyModel model = train::model_from_checkpoint(train::load_checkpoint(ckpt_path));
  data::SplitDataset ds = data::load_dataset(dataset);
  infer::PredictorConfig cfg = predictor_config(ds);

  json j;
  j["task"] = task;
  if (ds.meta.mark_kind == data::MarkKind::Categorical) {
    infer::LawFactory factory;
    if (model.kind() == train::ModelKind::IfibC) {
      factory = [&](const data::EventSequence& seq, size_t prefix) {
        auto states = model.ifib_c().encode(seq, prefix);
        return std::make_unique<infer::IfibCLaw>(model.ifib_c(), states.back());
      };
    } else {
      factory = [&](const data::EventSequence& seq, size_t prefix) {
        auto states = model.fenn().encode(seq, prefix);
        return std::make_unique<infer::FennLaw>(model.fenn(), states.back(), cfg.t_max,
                                                cfg.tail_samples);
      };
    }
    metrics::PredictionReport report = infer::prediction_report(factory, ds.test, cfg);
    if (task == "time-event") {
      j["mae"] = quantiles_json(report.mae);
      j["macro_f1"] = report.macro_f1_time_event;
    } else {
      j["mae_e"] = quantiles_json(report.mae_e);
      j["macro_f1"] = report.macro_f1_event_time;
    }
  } else {
    infer::LawFactoryN factory = [&](const data::EventSequence& seq, size_t prefix) {
      auto states = model.ifib_n().encode(seq, prefix);
      return std::make_unique<infer::IfibNLaw>(model.ifib_n(), states.back());
    };
    metrics::PredictionReport report = infer::prediction_report_n(factory, ds.test, cfg);
    if (task == "time-event") {
      j["mae"] = quantiles_json(report.mae);
      j["dv"] = quantiles_json(report.dv_time_event);
    } else {
      j["mae_e"] = quantiles_json(report.mae_e);
      j["dv"] = quantiles_json(report.dv_event_time);
    }
  }
  std::ofstream out(report_path);
  if (!out) throw std::runtime_error("cannot write " + report_path);
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_probe(const std::string& ckpt_path, const std::string& dataset, int seq_index, int prefix,
              int grid, const std::string& truth_path, const std::string& out_path) {
  train::AnyModel model = train::model_from_checkpoint(train::load_checkpoint(ckpt_path));
  data::SplitDataset ds = data::load_dataset(dataset);
  if (seq_index < 0 || seq_index >= static_cast<int>(ds.test.size()))
    throw std::runtime_error("sequence index outside the test split");
  const data::EventSequence& seq = ds.test[seq_index];
  if (prefix < 0 || prefix > static_cast<int>(seq.size()))
    throw std::runtime_error("prefix outside the sequence");
  double window = infer::horizon_cap(ds.train);

  infer::DensityCurve curve;
  std::vector<double> ts;
  if (ds.meta.mark_kind == data::MarkKind::Categorical) {
    auto states = model.kind() == train::ModelKind::IfibC
                      ? model.ifib_c().encode(seq, prefix)
                      : model.fenn().encode(seq, prefix);
    double t_l = states.back().t_last;
    for (int i = 0; i < grid; ++i) ts.push_back(t_l + window * i / (grid - 1));
    if (model.kind() == train::ModelKind::IfibC) {
      infer::IfibCLaw law(model.ifib_c(), states.back());
      curve = infer::probe_density_curve(law, ts);
    } else {
      infer::FennLaw law(model.fenn(), states.back(), window, 1000);
      curve = infer::probe_density_curve(law, ts);
    }
    if (!truth_path.empty()) {
      synth::TruthProcess p = synth::load_truth(truth_path);
      std::vector<double> hist(seq.times.begin(), seq.times.begin() + prefix);
      infer::TruthLaw law(p, hist);
      infer::DensityCurve tc = infer::probe_density_curve(law, ts);
      for (size_t m = 0; m < tc.mark_labels.size(); ++m)
        curve.mark_labels.push_back("truth:" + tc.mark_labels[m]);
      models::Mat merged(curve.values.rows() + tc.values.rows(), curve.values.cols());
      merged << curve.values, tc.values;
      curve.values = std::move(merged);
    }
  } else {
    auto states = model.ifib_n().encode(seq, prefix);
    double t_l = states.back().t_last;
    for (int i = 0; i < grid; ++i) ts.push_back(t_l + window * i / (grid - 1));
    infer::IfibNLaw law(model.ifib_n(), states.back());
    int n = law.dims();
    int g = 3;  // probe marks per dimension
    int rows = 1;
    for (int d = 0; d < n; ++d) rows *= g;
    models::Mat cells(rows, n);
    for (int r = 0; r < rows; ++r) {
      int rem = r;
      for (int d = 0; d < n; ++d) {
        auto [a, b] = law.bounds(d);
        cells(r, d) = a + ((rem % g) + 0.5) * (b - a) / g;
        rem /= g;
      }
    }
    curve = infer::probe_density_curve_n(law, cells, ts);
    if (!truth_path.empty()) {
      synth::TruthProcess p = synth::load_truth(truth_path);
      std::vector<double> hist(seq.times.begin(), seq.times.begin() + prefix);
      infer::TruthLawN law_t(p, hist);
      infer::DensityCurve tc = infer::probe_density_curve_n(law_t, cells, ts);
      for (size_t m = 0; m < tc.mark_labels.size(); ++m)
        curve.mark_labels.push_back("truth:" + tc.mark_labels[m]);
      models::Mat merged(curve.values.rows() + tc.values.rows(), curve.values.cols());
      merged << curve.values, tc.values;
      curve.values = std::move(merged);
    }
  }
  infer::write_csv(curve, out_path);
  std::cout << "wrote " << curve.values.rows() << " curves x " << curve.values.cols()
            << " points to " << out_path << "\n";
  return 0;
}

int cmd_diagnose_sum(const std::string& ckpt_path, const std::string& dataset, int samples,
                     const std::string& out_path) {
  train::AnyModel model = train::model_from_checkpoint(train::load_checkpoint(ckpt_path));
  data::SplitDataset ds = data::load_dataset(dataset);
  double t_max = infer::horizon_cap(ds.train);

  std::vector<int> counts;
  for (int n = 16; n < samples; n *= 4) counts.push_back(n);
  counts.push_back(samples);

  // sample histories: one mid-sequence prefix per test sequence, capped
  std::vector<std::pair<const data::EventSequence*, size_t>> histories;
  for (const auto& seq : ds.test) {
    if (seq.size() == 0) continue;
    histories.emplace_back(&seq, seq.size() / 2);
    if (histories.size() >= 20) break;
  }
  if (histories.empty()) throw std::runtime_error("diagnose-sum: empty test split");

  std::ostringstream csv;
  csv << "samples,sum_mean,sum_std\n";
  csv.precision(12);
  for (int n : counts) {
    std::vector<double> sums;
    for (auto& [seq, prefix] : histories) {
      if (model.kind() == train::ModelKind::IfibC) {
        auto states = model.ifib_c().encode(*seq, prefix);
        infer::IfibCLaw law(model.ifib_c(), states.back());
        sums.push_back(infer::sum_mark_marginals(law));
      } else if (model.kind() == train::ModelKind::IfibN) {
        auto states = model.ifib_n().encode(*seq, prefix);
        infer::IfibNLaw law(model.ifib_n(), states.back());
        std::vector<double> lo(law.dims()), hi(law.dims());
        for (int d = 0; d < law.dims(); ++d) std::tie(lo[d], hi[d]) = law.bounds(d);
        sums.push_back(law.cube_tail(lo, hi, states.back().t_last));
      } else {
        auto states = model.fenn().encode(*seq, prefix);
        infer::FennLaw law(model.fenn(), states.back(), t_max, n);
        sums.push_back(infer::sum_mark_marginals(law));
      }
    }
    double mean = 0.0;
    for (double s : sums) mean += s;
    mean /= sums.size();
    double var = 0.0;
    for (double s : sums) var += (s - mean) * (s - mean);
    double std = sums.size() > 1 ? std::sqrt(var / (sums.size() - 1)) : 0.0;
    csv << n << ',' << mean << ',' << std << '\n';
  }
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << csv.str();
    std::cout << "wrote sweep to " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intensity-free integral-based marked temporal point processes"};
  app.require_subcommand(1);

  std::string process = "hawkes1", marks = "categorical:5", scheme = "uniform";
  std::string counts = "1000,100,100", out_dir = "out";
  std::uint64_t seed = 1;
  double horizon = 40.0;
  size_t max_events = 0;
  auto* gen = app.add_subcommand("generate", "simulate a synthetic dataset");
  gen->add_option("--process", process,
                  "hawkes1|hawkes2|poisson|selfcorrect|renewal")->required();
  gen->add_option("--marks", marks, "categorical:K or numeric:lo,hi[xlo,hi...]");
  gen->add_option("--mark-scheme", scheme, "uniform|wheel (numeric marks)");
  gen->add_option("--counts", counts, "train,val,test sequence counts");
  gen->add_option("--seed", seed);
  gen->add_option("--horizon", horizon, "simulation horizon per sequence");
  gen->add_option("--max-events", max_events, "cap events per sequence (0 = off)");
  gen->add_option("--out", out_dir)->required();

  std::string config_path;
  auto* tr = app.add_subcommand("train", "train a model from a TOML config");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--out", out_dir)->required();

  std::string ckpt, dataset, truth, report;
  auto* ev = app.add_subcommand("eval", "fidelity metrics against the truth oracle");
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_option("--dataset", dataset)->required();
  ev->add_option("--truth", truth)->required();
  ev->add_option("--report", report)->required();

  std::string task = "time-event";
  auto* pr = app.add_subcommand("predict", "time-event / event-time prediction metrics");
  pr->add_option("--checkpoint", ckpt)->required();
  pr->add_option("--dataset", dataset)->required();
  pr->add_option("--task", task)->check(CLI::IsMember({"time-event", "event-time"}));
  pr->add_option("--report", report)->required();

  int seq_index = 0, prefix = 0, grid = 200;
  std::string probe_out, probe_truth;
  auto* pb = app.add_subcommand("probe", "density curves for one test prefix as CSV");
  pb->add_option("--checkpoint", ckpt)->required();
  pb->add_option("--dataset", dataset)->required();
  pb->add_option("--sequence-index", seq_index);
  pb->add_option("--prefix", prefix);
  pb->add_option("--grid", grid);
  pb->add_option("--truth", probe_truth, "also emit ground-truth curves");
  pb->add_option("--out", probe_out)->required();

  int samples = 4096;
  std::string diag_out;
  auto* dg = app.add_subcommand("diagnose-sum", "sum of mark marginals vs sampling density");
  dg->add_option("--checkpoint", ckpt)->required();
  dg->add_option("--dataset", dataset)->required();
  dg->add_option("--samples", samples);
  dg->add_option("--out", diag_out, "CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(process, marks, scheme, counts, seed, horizon, max_events, out_dir);
    if (tr->parsed()) return cmd_train(config_path, out_dir);
    if (ev->parsed()) return cmd_eval(ckpt, dataset, truth, report);
    if (pr->parsed()) return cmd_predict(ckpt, dataset, task, report);
    if (pb->parsed())
      return cmd_probe(ckpt, dataset, seq_index, prefix, grid, probe_truth, probe_out);
    if (dg->parsed()) return cmd_diagnose_sum(ckpt, dataset, samples, diag_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
