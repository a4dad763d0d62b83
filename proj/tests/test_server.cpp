#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fedbcs/errors.hpp"
#include "fedbcs/server.hpp"
#include "finch_oracle.hpp"
#include "test_util.hpp"

namespace fedbcs {
namespace {

using testing::finch_oracle;

TEST(Finch, MatchesBruteForceOracleOn100Instances) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto points = testing::random_finch_instance(rng);
    ASSERT_EQ(finch_cluster(points), finch_oracle(points)) << "instance " << trial << " (" << points.size()
                                                           << " points)";
  }
}

TEST(Finch, IdenticalVectorsFormOneCluster) {
  const std::vector<Tensor> pts(5, Tensor::vector({1, 2, 3}));
  EXPECT_EQ(finch_cluster(pts), (Partition{{0, 1, 2, 3, 4}}));
}

TEST(Finch, SinglePointIsSingleton) {
  EXPECT_EQ(finch_cluster(std::vector<Tensor>{Tensor::vector({1, 0})}), (Partition{{0}}));
}

TEST(Finch, TwoTightBlobsGiveTwoClusters) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0, 1e-3);
  std::vector<Tensor> pts;
  for (int i = 0; i < 8; ++i) {
    Tensor t = i % 2 ? Tensor::vector({1, 0, 0}) : Tensor::vector({0, 0, 1});
    for (auto& v : t.data()) v += noise(rng);
    pts.push_back(std::move(t));
  }
  EXPECT_EQ(finch_cluster(pts), (Partition{{0, 2, 4, 6}, {1, 3, 5, 7}}));
  EXPECT_EQ(finch_cluster(pts), finch_oracle(pts));
}

TEST(Finch, PermutationEquivariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    auto points = testing::random_finch_instance(rng);
    // Exact duplicates make the tie-break order-dependent; keep distinct points.
    std::vector<Tensor> distinct;
    for (auto& p : points) {
      if (std::none_of(distinct.begin(), distinct.end(), [&](const Tensor& q) { return q == p; })) {
        distinct.push_back(p);
      }
    }
    std::vector<std::size_t> perm(distinct.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tensor> permuted;
    for (auto i : perm) permuted.push_back(distinct[i]);
    const Partition base = finch_cluster(distinct);
    Partition mapped;
    for (const auto& cluster : finch_cluster(permuted)) {
      std::vector<std::size_t> m;
      for (auto i : cluster) m.push_back(perm[i]);
      std::sort(m.begin(), m.end());
      mapped.push_back(std::move(m));
    }
    std::sort(mapped.begin(), mapped.end());
    EXPECT_EQ(mapped, base) << "trial " << trial;
  }
}

TEST(Finch, FirstNeighborTiesGoToLowestIndex) {
  const std::vector<Tensor> pts{Tensor::vector({1, 0}), Tensor::vector({0, 1}), Tensor::vector({0, 1})};
  const auto kappa = first_neighbors(pts, DistanceKind::kCosine);
  EXPECT_EQ(kappa[0], 1u);  // points 1 and 2 are equidistant from 0
  EXPECT_EQ(kappa[1], 2u);
  EXPECT_EQ(kappa[2], 1u);
}

TEST(Finch, EmptyInputThrows) { EXPECT_THROW(finch_cluster({}), ContractError); }

TEST(Finch, HierarchyCoarsensMonotonically) {
  std::mt19937_64 rng(4);
  const auto points = testing::random_finch_instance(rng);
  const auto levels = finch_hierarchy(points, 5);
  ASSERT_FALSE(levels.empty());
  EXPECT_EQ(levels.front(), finch_cluster(points));
  for (std::size_t l = 1; l < levels.size(); ++l) EXPECT_LT(levels[l].size(), levels[l - 1].size());
}

TEST(Representatives, SingletonsAreThePointsThemselves) {
  const std::vector<Tensor> pts{Tensor::vector({1, 2}), Tensor::vector({3, 4})};
  const auto reps = cluster_representatives({{0}, {1}}, pts);
  EXPECT_EQ(reps[0], pts[0]);
  EXPECT_EQ(reps[1], pts[1]);
}

TEST(Representatives, PairAveragesToMidpoint) {
  const std::vector<Tensor> pts{Tensor::vector({0, 0}), Tensor::vector({2, 2})};
  EXPECT_EQ(cluster_representatives({{0, 1}}, pts)[0], Tensor::vector({1, 1}));
}

TEST(Representatives, MatchLoopOracle) {
  std::mt19937_64 rng(5);
  std::vector<Tensor> pts;
  for (int i = 0; i < 7; ++i) pts.push_back(testing::random_tensor({3}, rng));
  const Partition part{{0, 3, 5}, {1, 2}, {4, 6}};
  const auto reps = cluster_representatives(part, pts);
  for (std::size_t c = 0; c < part.size(); ++c) {
    for (std::size_t k = 0; k < 3; ++k) {
      Real s = 0;
      for (auto i : part[c]) s += pts[i][k];
      EXPECT_NEAR(reps[c][k], s / part[c].size(), 1e-15);
    }
  }
}

TEST(MeanPrototype, HandComputedCases) {
  const Tensor v = Tensor::vector({0.5, -2});
  EXPECT_EQ(mean_prototype(std::vector<Tensor>{v}), v);
  EXPECT_EQ(mean_prototype(std::vector<Tensor>{v, v * -1}).max_abs(), 0);
  const auto m =
      mean_prototype(std::vector<Tensor>{Tensor::vector({1, 2}), Tensor::vector({4, 0}), Tensor::vector({1, 1})});
  EXPECT_NEAR(m[0], 2, 1e-15);
  EXPECT_NEAR(m[1], 1, 1e-15);
  EXPECT_THROW(mean_prototype(std::vector<Tensor>{}), ContractError);
}

TEST(AggregationWeights, ProstateSiteCounts) {
  const std::vector<std::size_t> counts{30, 30, 19, 13, 12, 12};
  const auto w = AggregationWeights::from_counts(counts);
  const std::vector<Real> expected{30.0 / 116, 30.0 / 116, 19.0 / 116, 13.0 / 116, 12.0 / 116, 12.0 / 116};
  ASSERT_EQ(w.size(), 6u);
  Real total = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(w.values[i], expected[i], 1e-15);
    total += w.values[i];
  }
  EXPECT_NEAR(total, 1, 1e-12);
}

TEST(AggregationWeights, ZeroOrNoClientsRejected) {
  EXPECT_THROW(AggregationWeights::from_counts(std::vector<std::size_t>{}), AggregationError);
  EXPECT_THROW(AggregationWeights::from_counts(std::vector<std::size_t>{3, 0}), AggregationError);
}

TEST(FedAvg, EqualWeightsAverage) {
  const std::vector<NamedTensors> clients{{{"w", Tensor::scalar(1)}}, {{"w", Tensor::scalar(3)}}};
  EXPECT_EQ(fedavg_aggregate(clients, AggregationWeights{{0.5, 0.5}}).at("w").item(), 2);
}

TEST(FedAvg, OneHotWeightsReturnThatClientExactly) {
  std::mt19937_64 rng(6);
  const std::vector<NamedTensors> clients{{{"w", testing::random_tensor({5}, rng)}},
                                          {{"w", testing::random_tensor({5}, rng)}}};
  EXPECT_EQ(fedavg_aggregate(clients, AggregationWeights{{1, 0}}).at("w"), clients[0].at("w"));
}

TEST(FedAvg, IdenticalClientsReturnTheirParametersExactly) {
  const NamedTensors p{{"a", Tensor::vector({0.1, 0.7, -3.3})}, {"b", Tensor::scalar(1.0 / 3)}};
  const std::vector<NamedTensors> clients(3, p);
  const std::vector<std::size_t> counts{5, 5, 5};
  EXPECT_EQ(fedavg_aggregate(clients, AggregationWeights::from_counts(counts)), p);
}

TEST(FedAvg, MismatchedIdentifiersRejected) {
  const std::vector<NamedTensors> clients{{{"w", Tensor::scalar(1)}}, {{"v", Tensor::scalar(3)}}};
  EXPECT_THROW(fedavg_aggregate(clients, AggregationWeights{{0.5, 0.5}}), AggregationError);
  const std::vector<NamedTensors> shapes{{{"w", Tensor::scalar(1)}}, {{"w", Tensor::vector({1, 2})}}};
  EXPECT_THROW(fedavg_aggregate(shapes, AggregationWeights{{0.5, 0.5}}), AggregationError);
  EXPECT_THROW(fedavg_aggregate(clients, AggregationWeights{{1}}), AggregationError);
}

TEST(ServerRound, GlobalPrototypeCountBetweenOneAndClients) {
  std::mt19937_64 rng(7);
  std::vector<ClientPrototypes> uploads(4);
  for (auto& u : uploads)
    for (int cls : {0, 1})
      for (Pathway p : {Pathway::kEncoder, Pathway::kDecoder})
        u.prototypes.push_back(Prototype{cls, p, testing::random_tensor({6}, rng), 10});
  const std::vector<NamedTensors> params(4, NamedTensors{{"w", Tensor::scalar(1)}});
  const std::vector<std::size_t> counts{1, 2, 3, 4};
  const auto r = run_server_round(uploads, params, counts);
  EXPECT_EQ(r.global_params.at("w").item(), 1);
  EXPECT_EQ(r.prototypes.entries.size(), 4u);
  for (const auto& [key, g] : r.prototypes.entries) {
    EXPECT_GE(g.representatives.size(), 1u);
    EXPECT_LE(g.representatives.size(), 4u);
    EXPECT_LT(max_abs_diff(g.mean, mean_prototype(g.representatives)), 1e-12);
  }
}

TEST(ServerRound, AbsentClassExcludedFromItsGroup) {
  std::vector<ClientPrototypes> uploads(2);
  uploads[0].prototypes.push_back(Prototype{0, Pathway::kEncoder, Tensor::vector({1, 0}), 4});
  uploads[0].prototypes.push_back(Prototype{1, Pathway::kEncoder, Tensor::vector({0, 1}), 4});
  uploads[1].prototypes.push_back(Prototype{0, Pathway::kEncoder, Tensor::vector({1, 0.1}), 4});
  const auto g = build_global_prototypes(uploads);
  EXPECT_EQ(g.find(1, Pathway::kEncoder)->representatives.size(), 1u);
  EXPECT_EQ(g.find(1, Pathway::kEncoder)->mean, Tensor::vector({0, 1}));
  EXPECT_EQ(g.find(0, Pathway::kDecoder), nullptr);
}

TEST(ServerRound, NoUploadsIsAggregationError) {
  EXPECT_THROW(run_server_round({}, {}, {}), AggregationError);
}

}  // namespace
}  // namespace fedbcs
