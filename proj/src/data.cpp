#include "ifib/data.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ifib::data {

void DatasetMeta::validate() const {
  if (mark_kind == MarkKind::Categorical) {
    if (num_marks < 1) throw std::invalid_argument("meta: num_marks must be >= 1");
  } else {
    if (dims < 1) throw std::invalid_argument("meta: dims must be >= 1");
    if (static_cast<int>(bounds.size()) != dims)
      throw std::invalid_argument("meta: bounds size must equal dims");
    for (const auto& [a, b] : bounds)
      if (!(a < b)) throw std::invalid_argument("meta: bounds require a < b");
  }
  if (normalization && !(normalization->std > 0.0))
    throw std::invalid_argument("meta: normalization std must be > 0");
}

void EventSequence::validate(const DatasetMeta& meta, size_t seq_index) const {
  auto fail = [&](const std::string& field) {
    throw std::invalid_argument("sequence " + std::to_string(seq_index) + ": " + field);
  };
  for (size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) fail("non-finite time");
    if (i > 0 && !(times[i] > times[i - 1])) fail("times not strictly increasing");
  }
  if (!times.empty() && times.front() <= t_origin) fail("first time not after t_origin");
  if (meta.mark_kind == MarkKind::Categorical) {
    if (marks.size() != times.size()) fail("marks length != times length");
    for (int m : marks)
      if (m < 0 || m >= meta.num_marks) fail("mark out of range [0, K)");
  } else {
    if (vec_marks.size() != times.size()) fail("marks length != times length");
    for (const auto& v : vec_marks) {
      if (static_cast<int>(v.size()) != meta.dims) fail("mark dimension mismatch");
      for (int d = 0; d < meta.dims; ++d)
        if (v[d] < meta.bounds[d].first || v[d] > meta.bounds[d].second)
          fail("mark outside declared bounds");
    }
  }
}

void SplitDataset::validate() const {
  meta.validate();
  size_t i = 0;
  for (const auto* split : {&train, &validation, &test})
    for (const auto& s : *split) s.validate(meta, i++);
}

size_t SplitDataset::total_events() const {
  size_t n = 0;
  for (const auto* split : {&train, &validation, &test})
    for (const auto& s : *split) n += s.size();
  return n;
}

namespace {

EventSequence parse_sequence_line(const std::string& line, const DatasetMeta& meta,
                                  const std::string& file, int lineno) {
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(file + ":" + std::to_string(lineno) + ": " + what);
  };
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(std::string("parse error: ") + e.what());
  }
  if (!j.contains("time") || !j.contains("mark")) fail("missing \"time\" or \"mark\"");
  EventSequence seq;
  try {
    seq.times = j.at("time").get<std::vector<double>>();
    if (meta.mark_kind == MarkKind::Categorical)
      seq.marks = j.at("mark").get<std::vector<int>>();
    else
      seq.vec_marks = j.at("mark").get<std::vector<std::vector<double>>>();
    if (j.contains("t_origin")) seq.t_origin = j.at("t_origin").get<double>();
  } catch (const json::exception& e) {
    fail(std::string("bad field type: ") + e.what());
  }
  return seq;
}

std::vector<EventSequence> load_split(const fs::path& file, const DatasetMeta& meta) {
  std::vector<EventSequence> out;
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    out.push_back(parse_sequence_line(line, meta, file.filename().string(), lineno));
  }
  return out;
}

void save_split(const std::vector<EventSequence>& seqs, const DatasetMeta& meta,
                const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out.precision(17);
  for (const auto& s : seqs) {
    json j;
    j["time"] = s.times;
    if (meta.mark_kind == MarkKind::Categorical)
      j["mark"] = s.marks;
    else
      j["mark"] = s.vec_marks;
    if (s.t_origin != 0.0) j["t_origin"] = s.t_origin;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + file.string());
}

}  // namespace

DatasetMeta load_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  DatasetMeta meta;
  std::string kind = j.at("mark_kind").get<std::string>();
  if (kind == "categorical") {
    meta.mark_kind = MarkKind::Categorical;
    meta.num_marks = j.at("num_marks").get<int>();
  } else if (kind == "numeric") {
    meta.mark_kind = MarkKind::Numeric;
    meta.dims = j.at("dims").get<int>();
    for (const auto& b : j.at("bounds"))
      meta.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
  } else {
    throw std::runtime_error(path + ": unknown mark_kind " + kind);
  }
  if (j.contains("normalization") && !j.at("normalization").is_null()) {
    NormStats ns;
    ns.mean = j.at("normalization").at("mean").get<double>();
    ns.std = j.at("normalization").at("std").get<double>();
    meta.normalization = ns;
  }
  if (j.contains("inception_offset") && !j.at("inception_offset").is_null())
    meta.inception_offset = j.at("inception_offset").get<double>();
  meta.validate();
  return meta;
}

void save_meta(const DatasetMeta& meta, const std::string& path) {
  json j;
  if (meta.mark_kind == MarkKind::Categorical) {
    j["mark_kind"] = "categorical";
    j["num_marks"] = meta.num_marks;
  } else {
    j["mark_kind"] = "numeric";
    j["dims"] = meta.dims;
    j["bounds"] = json::array();
    for (const auto& [a, b] : meta.bounds) j["bounds"].push_back({a, b});
  }
  if (meta.normalization)
    j["normalization"] = {{"mean", meta.normalization->mean}, {"std", meta.normalization->std}};
  else
    j["normalization"] = nullptr;
  if (meta.inception_offset)
    j["inception_offset"] = *meta.inception_offset;
  else
    j["inception_offset"] = nullptr;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

SplitDataset load_dataset(const std::string& dir) {
  return load_dataset(dir, load_meta((fs::path(dir) / "meta.json").string()));
}

SplitDataset load_dataset(const std::string& dir, const DatasetMeta& meta) {
  meta.validate();
  SplitDataset ds;
  ds.meta = meta;
  ds.train = load_split(fs::path(dir) / "train.jsonl", meta);
  ds.validation = load_split(fs::path(dir) / "validation.jsonl", meta);
  ds.test = load_split(fs::path(dir) / "test.jsonl", meta);
  ds.validate();
  return ds;
}

void save_dataset(const SplitDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  save_meta(ds.meta, (fs::path(dir) / "meta.json").string());
  save_split(ds.train, ds.meta, fs::path(dir) / "train.jsonl");
  save_split(ds.validation, ds.meta, fs::path(dir) / "validation.jsonl");
  save_split(ds.test, ds.meta, fs::path(dir) / "test.jsonl");
}

std::vector<double> inter_event_times(const EventSequence& seq) {
  std::vector<double> dt;
  dt.reserve(seq.size());
  double prev = seq.t_origin;
  for (double t : seq.times) {
    dt.push_back(t - prev);
    prev = t;
  }
  return dt;
}

namespace {

EventSequence rescale_gaps(const EventSequence& seq, double factor) {
  EventSequence out = seq;
  double prev_old = seq.t_origin;
  double prev_new = seq.t_origin;
  for (size_t i = 0; i < seq.times.size(); ++i) {
    double gap = seq.times[i] - prev_old;
    prev_old = seq.times[i];
    prev_new += gap * factor;
    out.times[i] = prev_new;
  }
  return out;
}

SplitDataset map_splits(const SplitDataset& ds,
                        const std::function<EventSequence(const EventSequence&)>& f) {
  SplitDataset out;
  out.meta = ds.meta;
  for (const auto& s : ds.train) out.train.push_back(f(s));
  for (const auto& s : ds.validation) out.validation.push_back(f(s));
  for (const auto& s : ds.test) out.test.push_back(f(s));
  return out;
}

}  // namespace

SplitDataset normalize_times(const SplitDataset& ds) {
  if (ds.total_events() < 2) throw std::invalid_argument("normalize_times: need >= 2 events");
  double sum = 0.0, sumsq = 0.0;
  size_t n = 0;
  for (const auto& s : ds.train)
    for (double dt : inter_event_times(s)) {
      sum += dt;
      sumsq += dt * dt;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("normalize_times: empty training split");
  double mean = sum / static_cast<double>(n);
  double var = sumsq / static_cast<double>(n) - mean * mean;
  double std = std::sqrt(std::max(var, 0.0));
  if (!(std > 0.0)) throw std::invalid_argument("normalize_times: zero standard deviation");

  SplitDataset out = map_splits(ds, [&](const EventSequence& s) {
    return rescale_gaps(s, 1.0 / std);
  });
  out.meta.normalization = NormStats{mean, std};
  return out;
}

SplitDataset denormalize_times(const SplitDataset& ds) {
  if (!ds.meta.normalization)
    throw std::invalid_argument("denormalize_times: no stats recorded");
  double std = ds.meta.normalization->std;
  SplitDataset out = map_splits(ds, [&](const EventSequence& s) {
    return rescale_gaps(s, std);
  });
  out.meta.normalization.reset();
  return out;
}

SplitDataset inception_reset(const SplitDataset& ds, double t_offset) {
  if (!(t_offset > 0.0)) throw std::invalid_argument("inception_reset: t_offset must be > 0");
  SplitDataset out = map_splits(ds, [&](const EventSequence& s) {
    if (s.times.empty()) return s;
    EventSequence shifted = s;
    double shift = t_offset - s.times.front();
    for (double& t : shifted.times) t += shift;
    return shifted;
  });
  out.meta.inception_offset = t_offset;
  return out;
}

}  // namespace ifib::data
