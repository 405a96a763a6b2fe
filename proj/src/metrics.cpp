#include "ifib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ifib::metrics {

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 points");
  std::vector<double> rx = average_ranks(x);
  std::vector<double> ry = average_ranks(y);
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    double dx = rx[i] - mx, dy = ry[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx == 0.0 || vy == 0.0)
    throw std::invalid_argument("spearman: constant sequence has no rank variance");
  return cov / std::sqrt(vx * vy);
}

double l1_distance(std::span<const double> f, std::span<const double> g,
                   std::span<const double> grid) {
  if (f.size() != g.size() || f.size() != grid.size())
    throw std::invalid_argument("l1_distance: grid mismatch");
  if (grid.size() < 2) throw std::invalid_argument("l1_distance: need at least 2 points");
  double acc = 0.0;
  for (size_t i = 1; i < grid.size(); ++i) {
    double left = std::abs(f[i - 1] - g[i - 1]);
    double right = std::abs(f[i] - g[i]);
    acc += 0.5 * (left + right) * (grid[i] - grid[i - 1]);
  }
  return acc;
}

double relative_nll(std::span<const double> model_density,
                    std::span<const double> truth_density) {
  if (model_density.size() != truth_density.size())
    throw std::invalid_argument("relative_nll: length mismatch");
  if (model_density.empty()) throw std::invalid_argument("relative_nll: no events");
  double acc = 0.0;
  for (size_t i = 0; i < model_density.size(); ++i) {
    if (!(model_density[i] > 0.0) || !(truth_density[i] > 0.0))
      throw std::invalid_argument("relative_nll: zero density at an event");
    acc += std::abs(std::log(model_density[i]) - std::log(truth_density[i]));
  }
  return acc / static_cast<double>(model_density.size());
}

Quantiles error_quantiles(std::vector<double> errors) {
  if (errors.empty()) throw std::invalid_argument("error_quantiles: empty input");
  std::sort(errors.begin(), errors.end());
  auto nearest_rank = [&](double q) {
    size_t r = static_cast<size_t>(std::ceil(q * static_cast<double>(errors.size())));
    if (r == 0) r = 1;
    return errors[r - 1];
  };
  return {nearest_rank(0.25), nearest_rank(0.50), nearest_rank(0.75)};
}

double macro_f1(std::span<const int> predictions, std::span<const int> truths, int num_classes) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("macro_f1: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("macro_f1: empty input");
  if (num_classes < 1) throw std::invalid_argument("macro_f1: need at least one class");
  std::vector<double> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (size_t i = 0; i < predictions.size(); ++i) {
    int p = predictions[i], t = truths[i];
    if (p < 0 || p >= num_classes || t < 0 || t >= num_classes)
      throw std::invalid_argument("macro_f1: label out of range");
    if (p == t)
      tp[p] += 1;
    else {
      fp[p] += 1;
      fn[t] += 1;
    }
  }
  double acc = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    double denom = 2.0 * tp[c] + fp[c] + fn[c];
    acc += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  return acc / static_cast<double>(num_classes);
}

Quantiles dv_quantiles(const std::vector<std::vector<double>>& predicted,
                       const std::vector<std::vector<double>>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("dv: length mismatch");
  std::vector<double> dist;
  dist.reserve(predicted.size());
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != truth[i].size())
      throw std::invalid_argument("dv: dimension mismatch");
    double acc = 0.0;
    for (size_t d = 0; d < predicted[i].size(); ++d) {
      double diff = predicted[i][d] - truth[i][d];
      acc += diff * diff;
    }
    dist.push_back(std::sqrt(acc));
  }
  return error_quantiles(std::move(dist));
}

}  // namespace ifib::metrics
