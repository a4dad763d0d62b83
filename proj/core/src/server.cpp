#include "fedbcs/server.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedbcs/errors.hpp"

namespace fedbcs {

Real cosine_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_distance");
  const Real na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return Real{1};
  return Real{1} - a.dot(b) / (na * nb);
}

Real euclidean_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "euclidean_distance");
  return (a - b).norm();
}

std::vector<std::size_t> first_neighbors(std::span<const Tensor> points, DistanceKind kind) {
  const std::size_t n = points.size();
  std::vector<std::size_t> kappa(n);
  for (std::size_t i = 0; i < n; ++i) {
    Real best = std::numeric_limits<Real>::infinity();
    kappa[i] = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Real d = kind == DistanceKind::kCosine ? cosine_distance(points[i], points[j])
                                                   : euclidean_distance(points[i], points[j]);
      if (d < best) {
        best = d;
        kappa[i] = j;
      }
    }
  }
  return kappa;
}

namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

Partition canonical(std::vector<std::size_t>& parent) {
  const std::size_t n = parent.size();
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find_root(parent, i)].push_back(i);
  Partition out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

}  // namespace

Partition finch_cluster(std::span<const Tensor> points, DistanceKind kind) {
  if (points.empty()) throw ContractError("finch_cluster: no points");
  const auto kappa = first_neighbors(points, kind);
  // Linking i to kappa(i) for every i also joins i and j whenever they
  // share a first neighbour, so the three adjacency rules collapse to one.
  std::vector<std::size_t> parent(points.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto a = find_root(parent, i), b = find_root(parent, kappa[i]);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  return canonical(parent);
}

std::vector<Partition> finch_hierarchy(std::span<const Tensor> points, std::size_t depth, DistanceKind kind) {
  if (depth == 0) throw ContractError("finch_hierarchy: depth must be >= 1");
  std::vector<Partition> levels{finch_cluster(points, kind)};
  while (levels.size() < depth && levels.back().size() > 1) {
    const Partition& prev = levels.back();
    const auto means = cluster_representatives(prev, points);
    const Partition merged = finch_cluster(means, kind);
    if (merged.size() == prev.size()) break;
    Partition next;
    for (const auto& group : merged) {
      std::vector<std::size_t> members;
      for (auto c : group) members.insert(members.end(), prev[c].begin(), prev[c].end());
      std::sort(members.begin(), members.end());
      next.push_back(std::move(members));
    }
    std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    levels.push_back(std::move(next));
  }
  return levels;
}

std::vector<Tensor> cluster_representatives(const Partition& partition, std::span<const Tensor> points) {
  std::vector<Tensor> reps;
  reps.reserve(partition.size());
  for (const auto& members : partition) {
    if (members.empty()) throw ContractError("cluster_representatives: empty cluster");
    Tensor sum = Tensor::zeros(points[members.front()].shape());
    for (auto i : members) {
      if (i >= points.size()) throw ContractError("cluster_representatives: index out of range");
      sum += points[i];
    }
    sum *= Real{1} / static_cast<Real>(members.size());
    reps.push_back(std::move(sum));
  }
  return reps;
}

Tensor mean_prototype(std::span<const Tensor> representatives) {
  if (representatives.empty()) throw ContractError("mean_prototype: no representatives");
  Tensor sum = Tensor::zeros(representatives.front().shape());
  for (const auto& r : representatives) sum += r;
  sum *= Real{1} / static_cast<Real>(representatives.size());
  return sum;
}

AggregationWeights AggregationWeights::from_counts(std::span<const std::size_t> sample_counts) {
  if (sample_counts.empty()) throw AggregationError("aggregation weights: no clients");
  std::size_t total = 0;
  for (auto n : sample_counts) {
    if (n == 0) throw AggregationError("aggregation weights: client with zero samples");
    total += n;
  }
  AggregationWeights w;
  for (auto n : sample_counts) w.values.push_back(static_cast<Real>(n) / static_cast<Real>(total));
  return w;
}

NamedTensors fedavg_aggregate(std::span<const NamedTensors> client_params, const AggregationWeights& weights) {
  if (client_params.empty()) throw AggregationError("fedavg_aggregate: no clients");
  if (client_params.size() != weights.size()) {
    throw AggregationError("fedavg_aggregate: " + std::to_string(client_params.size()) + " clients but " +
                           std::to_string(weights.size()) + " weights");
  }
  const NamedTensors& first = client_params.front();
  for (std::size_t m = 1; m < client_params.size(); ++m) {
    const NamedTensors& other = client_params[m];
    const bool same = other.size() == first.size() &&
                      std::equal(first.begin(), first.end(), other.begin(), [](const auto& a, const auto& b) {
                        return a.first == b.first && a.second.shape() == b.second.shape();
                      });
    if (!same) throw AggregationError("fedavg_aggregate: client " + std::to_string(m) + " parameter set differs");
  }
  NamedTensors global;
  for (const auto& [id, value] : first) {
    Tensor acc = Tensor::zeros(value.shape());
    for (std::size_t m = 0; m < client_params.size(); ++m) acc.add_scaled(client_params[m].at(id), weights.values[m]);
    global.emplace(id, std::move(acc));
  }
  return global;
}

const GlobalClassPrototypes* GlobalPrototypeSet::find(int class_id, Pathway p) const {
  auto it = entries.find({class_id, p});
  return it == entries.end() ? nullptr : &it->second;
}

GlobalPrototypeSet build_global_prototypes(std::span<const ClientPrototypes> uploads, const ServerOptions& options) {
  std::map<std::pair<int, Pathway>, std::vector<Tensor>> groups;
  for (const auto& client : uploads) {
    for (const auto& proto : client.prototypes) groups[{proto.class_id, proto.pathway}].push_back(proto.vector);
  }
  GlobalPrototypeSet out;
  for (auto& [key, points] : groups) {
    const auto levels = finch_hierarchy(points, options.finch_level, options.distance);
    GlobalClassPrototypes g;
    g.representatives = cluster_representatives(levels.back(), points);
    g.mean = mean_prototype(g.representatives);
    out.entries.emplace(key, std::move(g));
  }
  return out;
}

ServerRoundResult run_server_round(std::span<const ClientPrototypes> uploads,
                                   std::span<const NamedTensors> client_params,
                                   std::span<const std::size_t> sample_counts, const ServerOptions& options) {
  if (client_params.empty()) throw AggregationError("server round: no client uploads");
  ServerRoundResult r;
  r.global_params = fedavg_aggregate(client_params, AggregationWeights::from_counts(sample_counts));
  r.prototypes = build_global_prototypes(uploads, options);
  return r;
}

}  // namespace fedbcs
