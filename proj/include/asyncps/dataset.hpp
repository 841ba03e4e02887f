#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asyncps/linalg.hpp"

namespace asyncps {

using Rng = std::mt19937_64;

// Independent, reproducible stream for (seed, stream id).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

// Rows owned by one partition; global_offsets[i] is the global sample index of rows[i].
struct DataPartition {
  std::vector<SparseRow> rows;
  std::vector<std::size_t> global_offsets;
  std::size_t partition_id = 0;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
};

struct Dataset {
  std::vector<DataPartition> partitions;
  std::size_t n = 0;
  std::size_t d = 0;

  std::size_t partition_count() const noexcept { return partitions.size(); }

  // All rows in global-index order.
  std::vector<SparseRow> rows() const {
    std::vector<SparseRow> out(n);
    for (const auto& p : partitions) {
      for (std::size_t i = 0; i < p.size(); ++i) out[p.global_offsets[i]] = p.rows[i];
    }
    return out;
  }
};

// Single-partition dataset holding rows in their given order.
inline Dataset make_unpartitioned(std::vector<SparseRow> rows, std::size_t d) {
  Dataset ds;
  ds.n = rows.size();
  ds.d = d;
  if (!rows.empty()) {
    DataPartition p;
    p.global_offsets.resize(rows.size());
    std::iota(p.global_offsets.begin(), p.global_offsets.end(), std::size_t{0});
    p.rows = std::move(rows);
    ds.partitions.push_back(std::move(p));
  }
  return ds;
}

// Seeded shuffle followed by round-robin dealing; partition p receives the
// shuffled positions p, p+P, p+2P, ... so the remainder lands on the lowest ids.
inline Dataset partition(std::vector<SparseRow> rows, std::size_t d, std::size_t parts,
                         std::uint64_t seed) {
  if (parts == 0) throw std::invalid_argument("partition: partition count must be >= 1");
  if (parts > rows.size()) {
    throw std::invalid_argument("partition: " + std::to_string(parts) +
                                " partitions for " + std::to_string(rows.size()) + " rows");
  }
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0x5041525449ull);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset ds;
  ds.n = rows.size();
  ds.d = d;
  ds.partitions.resize(parts);
  for (std::size_t p = 0; p < parts; ++p) ds.partitions[p].partition_id = p;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    auto& part = ds.partitions[pos % parts];
    part.global_offsets.push_back(order[pos]);
    part.rows.push_back(std::move(rows[order[pos]]));
  }
  return ds;
}

inline Dataset partition(const Dataset& ds, std::size_t parts, std::uint64_t seed) {
  return partition(ds.rows(), ds.d, parts, seed);
}

inline std::size_t minibatch_size(std::size_t partition_size, double rate) {
  const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(partition_size)));
  return std::clamp<std::size_t>(k, 1, partition_size);
}

// Local indices, ascending, sampled without replacement.
inline std::vector<std::size_t> sample_minibatch(const DataPartition& part, double rate, Rng& rng) {
  if (part.empty()) throw std::invalid_argument("sample_minibatch: empty partition");
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("sample_minibatch: rate must be in (0, 1]");
  const std::size_t k = minibatch_size(part.size(), rate);
  std::vector<std::size_t> all(part.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (k == all.size()) return all;
  std::vector<std::size_t> picked;
  picked.reserve(k);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), k, rng);
  std::sort(picked.begin(), picked.end());
  return picked;
}

template <class L>
concept Loss = requires(const L& loss, const SparseRow& row, const DenseVector& w, DenseVector& out,
                        double scale) {
  { loss.value(row, w) } -> std::convertible_to<double>;
  { loss.accumulate_gradient(row, w, scale, out) };
};

// (x'w - y)^2
struct LeastSquares {
  double value(const SparseRow& row, const DenseVector& w) const noexcept {
    const double r = dot(row, w) - row.label;
    return r * r;
  }

  // out += scale * 2 x (x'w - y)
  void accumulate_gradient(const SparseRow& row, const DenseVector& w, double scale,
                           DenseVector& out) const noexcept {
    const double r = dot(row, w) - row.label;
    axpy(scale * 2.0 * r, row, out);
  }
};

template <Loss L = LeastSquares>
DenseVector sample_gradient(const SparseRow& row, const DenseVector& w, const L& loss = {}) {
  DenseVector g(w.size());
  loss.accumulate_gradient(row, w, 1.0, g);
  return g;
}

// Running sum of per-sample gradients; mean() applies the 1/|S| scaling.
struct GradientSum {
  DenseVector sum;
  std::size_t count = 0;

  explicit GradientSum(std::size_t dim) : sum(dim) {}

  template <Loss L = LeastSquares>
  void add(const SparseRow& row, const DenseVector& w, const L& loss = {}) {
    loss.accumulate_gradient(row, w, 1.0, sum);
    ++count;
  }

  DenseVector mean() const {
    if (count == 0) throw std::logic_error("GradientSum::mean on empty sum");
    DenseVector g = sum;
    const double c = static_cast<double>(count);
    for (double& v : g) v /= c;
    return ensure_finite(g, "minibatch gradient");
  }
};

template <Loss L = LeastSquares>
DenseVector minibatch_gradient(const DataPartition& part, std::span<const std::size_t> local,
                               const DenseVector& w, const L& loss = {}) {
  if (local.empty()) throw std::invalid_argument("minibatch_gradient: empty sample set");
  GradientSum acc(w.size());
  for (std::size_t i : local) acc.add(part.rows.at(i), w, loss);
  return acc.mean();
}

// (1/workers) * sum_i ||A_i w - b_i||^2
template <Loss L = LeastSquares>
double objective(const Dataset& ds, const DenseVector& w, std::size_t workers = 1, const L& loss = {}) {
  if (workers == 0) throw std::invalid_argument("objective: workers must be >= 1");
  double total = 0.0;
  for (const auto& p : ds.partitions) {
    for (const auto& row : p.rows) total += loss.value(row, w);
  }
  return total / static_cast<double>(workers);
}

}  // namespace asyncps
