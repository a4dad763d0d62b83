#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "fedbcs/autodiff.hpp"
#include "fedbcs/prototypes.hpp"

namespace fedbcs {

/// Clusters as member index lists. Canonical order: members ascending,
/// clusters ordered by their smallest member.
using Partition = std::vector<std::vector<std::size_t>>;

enum class DistanceKind { kCosine, kEuclidean };

/// 1 - cos(a, b); a zero vector has cosine 0 with everything.
Real cosine_distance(const Tensor& a, const Tensor& b);
Real euclidean_distance(const Tensor& a, const Tensor& b);

/// Index of each point's nearest other point; ties go to the lowest index.
/// A single point is its own neighbour.
std::vector<std::size_t> first_neighbors(std::span<const Tensor> points, DistanceKind kind);

/// First FINCH partition: connected components of the first-neighbour
/// graph. At least one point.
Partition finch_cluster(std::span<const Tensor> points, DistanceKind kind = DistanceKind::kCosine);

/// Up to `depth` FINCH levels, each one re-clustering the previous level's
/// cluster means and expressed over the original points. Stops early once
/// a level no longer merges anything.
std::vector<Partition> finch_hierarchy(std::span<const Tensor> points, std::size_t depth,
                                       DistanceKind kind = DistanceKind::kCosine);

/// Arithmetic mean of each cluster's members.
std::vector<Tensor> cluster_representatives(const Partition& partition, std::span<const Tensor> points);

/// Arithmetic mean of the representatives. At least one.
Tensor mean_prototype(std::span<const Tensor> representatives);

/// w_m = N_m / sum N.
struct AggregationWeights {
  std::vector<Real> values;

  static AggregationWeights from_counts(std::span<const std::size_t> sample_counts);
  std::size_t size() const { return values.size(); }
};

/// Per-parameter weighted sum, reduced in ascending client order.
NamedTensors fedavg_aggregate(std::span<const NamedTensors> client_params, const AggregationWeights& weights);

struct GlobalClassPrototypes {
  std::vector<Tensor> representatives;
  Tensor mean;
};

struct GlobalPrototypeSet {
  std::map<std::pair<int, Pathway>, GlobalClassPrototypes> entries;

  const GlobalClassPrototypes* find(int class_id, Pathway p) const;
  bool empty() const { return entries.empty(); }
};

struct ServerOptions {
  DistanceKind distance = DistanceKind::kCosine;
  /// FINCH level used for the representatives (1 = first partition).
  std::size_t finch_level = 1;

  friend bool operator==(const ServerOptions&, const ServerOptions&) = default;
};

/// Clusters each (class, pathway) group of uploads independently.
GlobalPrototypeSet build_global_prototypes(std::span<const ClientPrototypes> uploads,
                                           const ServerOptions& options = {});

struct ServerRoundResult {
  NamedTensors global_params;
  GlobalPrototypeSet prototypes;
};

ServerRoundResult run_server_round(std::span<const ClientPrototypes> uploads,
                                   std::span<const NamedTensors> client_params,
                                   std::span<const std::size_t> sample_counts,
                                   const ServerOptions& options = {});

}  // namespace fedbcs
