#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asyncps/dataset.hpp"
#include "asyncps/libsvm.hpp"

namespace asyncps {

struct SynthSpec {
  std::size_t n = 0;
  std::size_t d = 0;
  std::uint64_t seed = 0;
  double noise = 0.0;  // standard deviation of additive label noise
};

struct SynthProblem {
  std::vector<SparseRow> rows;
  DenseVector planted;
  std::size_t d = 0;
};

// Gaussian design, planted w* ~ N(0, I), labels b = A w* + noise * N(0, 1).
inline SynthProblem make_synthetic(const SynthSpec& spec) {
  if (spec.n == 0 || spec.d == 0) throw std::invalid_argument("make_synthetic: n and d must be positive");
  Rng rng = make_rng(spec.seed, 0x53594e5448ull);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthProblem out;
  out.d = spec.d;
  out.planted = DenseVector(spec.d);
  for (double& v : out.planted) v = gauss(rng);

  out.rows.resize(spec.n);
  for (auto& row : out.rows) {
    row.indices.resize(spec.d);
    row.values.resize(spec.d);
    for (std::size_t j = 0; j < spec.d; ++j) {
      row.indices[j] = j;
      row.values[j] = gauss(rng);
    }
    row.label = dot(row, out.planted);
    if (spec.noise > 0.0) row.label += spec.noise * gauss(rng);
  }
  return out;
}

// "synth:n,d,seed" or "synth:n,d,seed,noise"
inline SynthSpec parse_synth_spec(std::string_view text) {
  constexpr std::string_view prefix = "synth:";
  if (text.substr(0, prefix.size()) != prefix) {
    throw std::invalid_argument("synthetic spec must start with 'synth:'");
  }
  text.remove_prefix(prefix.size());
  std::vector<std::string_view> parts;
  while (true) {
    const auto comma = text.find(',');
    parts.push_back(text.substr(0, comma));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (parts.size() != 3 && parts.size() != 4) {
    throw std::invalid_argument("synthetic spec expects synth:n,d,seed[,noise]");
  }
  SynthSpec spec;
  if (!detail::parse_number(parts[0], spec.n) || !detail::parse_number(parts[1], spec.d) ||
      !detail::parse_number(parts[2], spec.seed) ||
      (parts.size() == 4 && !detail::parse_number(parts[3], spec.noise))) {
    throw std::invalid_argument("malformed synthetic spec");
  }
  return spec;
}

}  // namespace asyncps
