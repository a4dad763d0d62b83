#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fedbcs/server.hpp"

namespace fedbcs::testing {

/// Brute-force first partition: explicit adjacency matrix from the three
/// linking rules, then depth-first components.
inline Partition finch_oracle(const std::vector<Tensor>& points) {
  const std::size_t n = points.size();
  auto distance = [&](std::size_t i, std::size_t j) {
    Real dot = 0, ni = 0, nj = 0;
    for (std::size_t k = 0; k < points[i].size(); ++k) {
      dot += points[i][k] * points[j][k];
      ni += points[i][k] * points[i][k];
      nj += points[j][k] * points[j][k];
    }
    if (ni == 0 || nj == 0) return Real{1};
    return Real{1} - dot / (std::sqrt(ni) * std::sqrt(nj));
  };
  std::vector<std::size_t> kappa(n);
  for (std::size_t i = 0; i < n; ++i) {
    Real best = std::numeric_limits<Real>::infinity();
    kappa[i] = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && distance(i, j) < best) {
        best = distance(i, j);
        kappa[i] = j;
      }
    }
  }
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && (kappa[i] == j || kappa[j] == i || kappa[i] == kappa[j])) adj[i][j] = true;
  std::vector<int> comp(n, -1);
  Partition out;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> members, stack{s};
    comp[s] = static_cast<int>(out.size());
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      members.push_back(v);
      for (std::size_t u = 0; u < n; ++u) {
        if (adj[v][u] && comp[u] < 0) {
          comp[u] = comp[s];
          stack.push_back(u);
        }
      }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;  // seeds ascend, so clusters are ordered by smallest member
}

/// Random instance of 1..64 points in 2..8 dimensions. Some instances are
/// blob mixtures and some contain exact duplicates, to exercise ties.
inline std::vector<Tensor> random_finch_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> count(1, 64), dims(2, 8), blobs(1, 5);
  std::normal_distribution<double> normal(0, 1);
  const std::size_t n = count(rng), d = dims(rng), k = blobs(rng);
  const double spread = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
  std::vector<Tensor> centers;
  for (std::size_t c = 0; c < k; ++c) {
    Tensor t({d});
    for (auto& v : t.data()) v = normal(rng);
    centers.push_back(std::move(t));
  }
  std::vector<Tensor> points;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && rng() % 8 == 0) {
      points.push_back(points[rng() % points.size()]);
      continue;
    }
    Tensor t = centers[rng() % k];
    for (auto& v : t.data()) v += spread * normal(rng);
    points.push_back(std::move(t));
  }
  return points;
}

}  // namespace fedbcs::testing
