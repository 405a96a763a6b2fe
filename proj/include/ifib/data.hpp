#pragma once

// Event-sequence data model, JSON-lines dataset I/O, and the two
// preprocessing transforms (inter-event time scaling, inception reset).

#include <optional>
#include <string>
#include <vector>

namespace ifib::data {

enum class MarkKind { Categorical, Numeric };

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

struct DatasetMeta {
  MarkKind mark_kind = MarkKind::Categorical;
  int num_marks = 0;                               // categorical only, K
  int dims = 0;                                    // numeric only, n
  std::vector<std::pair<double, double>> bounds;   // numeric only, [a_i, b_i]
  std::optional<NormStats> normalization;          // applied to inter-event times
  std::optional<double> inception_offset;

  void validate() const;
};

// Ordered (time, mark) records. Marks are categorical indices or fixed-width
// real vectors; at most one event per instant (times strictly increasing).
struct EventSequence {
  std::vector<double> times;
  std::vector<int> marks;                       // categorical
  std::vector<std::vector<double>> vec_marks;   // numeric
  double t_origin = 0.0;

  size_t size() const { return times.size(); }
  // Throws std::invalid_argument naming the violated field.
  void validate(const DatasetMeta& meta, size_t seq_index) const;
};

struct SplitDataset {
  std::vector<EventSequence> train, validation, test;
  DatasetMeta meta;

  void validate() const;
  size_t total_events() const;
};

// One split per file: train.jsonl / validation.jsonl / test.jsonl next to
// meta.json under `dir`. Parse errors carry the file name and line number.
SplitDataset load_dataset(const std::string& dir);
SplitDataset load_dataset(const std::string& dir, const DatasetMeta& meta);
void save_dataset(const SplitDataset& ds, const std::string& dir);

DatasetMeta load_meta(const std::string& path);
void save_meta(const DatasetMeta& meta, const std::string& path);

// Inter-event gaps of one sequence (first gap taken from t_origin).
std::vector<double> inter_event_times(const EventSequence& seq);

// Scales inter-event times by the training split's standard deviation and
// records (mean, std) in the meta. Scale only, no centering: gaps must stay
// positive. Statistics come from the training split and are applied to all
// splits.
SplitDataset normalize_times(const SplitDataset& ds);

// Inverse of normalize_times using the recorded stats.
SplitDataset denormalize_times(const SplitDataset& ds);

// Shifts every sequence so its first event lands at t_offset (> 0).
SplitDataset inception_reset(const SplitDataset& ds, double t_offset);

}  // namespace ifib::data
