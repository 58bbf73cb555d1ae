#include "dense_reference.hpp"

#include "hnd/error.hpp"
#include "hnd/hypergraph.hpp"
#include "hnd/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <functional>
#include <algorithm>

namespace hnd {
namespace {

using testing::h0;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

TEST(Hypergraph, ConstructsH0) {
  const Hypergraph hg = h0();
  EXPECT_EQ(hg.node_count(), 3);
  EXPECT_EQ(hg.edge_count(), 2);
  EXPECT_EQ(hg.pair_count(), 5);
}

TEST(Hypergraph, RejectsInvalidInputs) {
  EXPECT_EQ(kind_of([] { Hypergraph::create(3, {{0}, {0, 1, 2}}); }), ErrorKind::DegenerateEdge);
  EXPECT_EQ(kind_of([] { Hypergraph::create(3, {{0, 0}, {0, 1, 2}}); }), ErrorKind::DegenerateEdge);
  EXPECT_EQ(kind_of([] { Hypergraph::create(3, {{0, 1}, {0, 1, 2}}, {0.0, 1.0}); }),
            ErrorKind::NonPositiveWeight);
  EXPECT_EQ(kind_of([] { Hypergraph::create(3, {{0, 1}, {0, 1, 2}}, {-1.0, 1.0}); }),
            ErrorKind::NonPositiveWeight);
  EXPECT_EQ(kind_of([] { Hypergraph::create(3, {{0, 3}}); }), ErrorKind::NodeIdOutOfRange);
  EXPECT_EQ(kind_of([] { Hypergraph::create(3, {{0, 1}}); }), ErrorKind::IsolatedNode);
}

TEST(Degrees, UnitWeights) {
  const Degrees d = degrees(h0());
  EXPECT_EQ(d.node, Eigen::Vector3d(2, 2, 1));
  EXPECT_EQ(d.edge_size, (std::vector<Index>{2, 3}));
}

TEST(Degrees, WeightedSums) {
  EXPECT_EQ(degrees(h0({2.0, 3.0})).node, Eigen::Vector3d(5, 5, 3));
  EXPECT_EQ(degrees(Hypergraph::create(2, {{0, 1}})).node, Eigen::Vector2d(1, 1));
}

TEST(PairIndex, OrderingConvention) {
  const PairIndex idx = pair_index(h0());
  const std::vector<Pair> expected{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 2}};
  EXPECT_EQ(idx.pairs, expected);
  EXPECT_EQ(idx.size(), 5);
  EXPECT_EQ(pair_index(Hypergraph::create(2, {{1, 0}})).size(), 2);
}

TEST(PairIndex, ReversedInputReversesBlocksOnly) {
  const Hypergraph hg = Hypergraph::create(3, {{2, 0, 1}, {1, 0}});
  const std::vector<Pair> expected{{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}};
  EXPECT_EQ(pair_index(hg).pairs, expected);
}

TEST(PairIndex, NodeIncidenceLists) {
  const PairIndex idx = pair_index(h0());
  ASSERT_EQ(idx.node_offsets.size(), 4u);
  EXPECT_EQ(idx.node_offsets[1] - idx.node_offsets[0], 2);
  EXPECT_EQ(idx.node_offsets[3] - idx.node_offsets[2], 1);
  EXPECT_EQ(idx.node_pairs[static_cast<std::size_t>(idx.node_offsets[2])], 4);
}

TEST(PairIndex, SizeEqualsSumOfEdgeSizes) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const Hypergraph hg = testing::random_hypergraph(rng, 20, 12, 6);
    Index total = 0;
    for (Index s : degrees(hg).edge_size) total += s;
    EXPECT_EQ(total, pair_index(hg).size());
  }
}

TEST(Parse, TextFormat) {
  const Hypergraph hg = parse_hypergraph("3 2\n1 2 0 1\n1 3 0 1 2\n");
  EXPECT_EQ(hg, h0());
}

TEST(Parse, TextFormatWithCommentsAndWeights) {
  const Hypergraph hg = parse_hypergraph("# fixture\n3 2\n2.0 2 1 0\n3 3 2 1 0\n");
  EXPECT_EQ(hg, h0({2.0, 3.0}));
}

TEST(Parse, ErrorsByKind) {
  EXPECT_EQ(kind_of([] { parse_hypergraph("3 2\n1 1 0\n1 3 0 1 2\n"); }), ErrorKind::DegenerateEdge);
  EXPECT_EQ(kind_of([] { parse_hypergraph("3 2\n0 2 0 1\n1 3 0 1 2\n"); }), ErrorKind::NonPositiveWeight);
  EXPECT_EQ(kind_of([] { parse_hypergraph("3 2\n1 2 0 1\n1 3 0 1 5\n"); }), ErrorKind::NodeIdOutOfRange);
  EXPECT_EQ(kind_of([] { parse_hypergraph("4 2\n1 2 0 1\n1 3 0 1 2\n"); }), ErrorKind::IsolatedNode);
  EXPECT_EQ(kind_of([] { parse_hypergraph("3 2\n1 2 0 1\n"); }), ErrorKind::MalformedDocument);
  EXPECT_EQ(kind_of([] { parse_hypergraph("3 x\n"); }), ErrorKind::MalformedDocument);
  EXPECT_EQ(kind_of([] { parse_hypergraph("{\"n\": 3, \"edges\": [[0,1],[0,1,2]], \"extra\": 1}"); }),
            ErrorKind::MalformedDocument);
}

TEST(Parse, StructuredFormat) {
  const Dataset ds = parse_dataset(
      R"({"n": 3, "edges": [[0, 1], [0, 1, 2]], "weights": [1, 1],
          "features": [[1, 0], [0, 1], [2, 2]], "labels": [0, 1, 1]})");
  EXPECT_EQ(ds.hypergraph, h0());
  EXPECT_EQ(ds.features.rows(), 3);
  EXPECT_EQ(ds.features(2, 1), 2.0);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(ds.class_count, 2);
}

TEST(Parse, RoundTrips) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Hypergraph hg = testing::random_hypergraph(rng, 15, 8, 5);
    EXPECT_EQ(parse_hypergraph(to_text(hg)), hg);
    EXPECT_EQ(parse_hypergraph(to_json(hg)), hg);
  }
  SbmParams p{20, 12, 5, 1, 3, 1.0, 9};
  const Dataset ds = generate_sbm(p);
  const Dataset back = parse_dataset(to_json(ds));
  EXPECT_EQ(back.hypergraph, ds.hypergraph);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(Sbm, ShapeAndComposition) {
  SbmParams p;
  p.seed = 3;
  const Dataset ds = generate_sbm(p);
  EXPECT_EQ(ds.hypergraph.node_count(), 5000);
  EXPECT_EQ(ds.hypergraph.edge_count(), 1000);
  EXPECT_EQ(ds.features.cols(), 32);
  for (const auto& edge : ds.hypergraph.edges()) {
    ASSERT_EQ(edge.size(), 15u);
    int ones = 0;
    for (Index v : edge) ones += ds.labels[static_cast<std::size_t>(v)];
    EXPECT_TRUE(ones == 1 || ones == 14);
  }
}

TEST(Sbm, AlphaSevenSplitsSevenEight) {
  const Dataset ds = generate_sbm({250, 100, 15, 7, 2, 1.0, 4});
  for (const auto& edge : ds.hypergraph.edges()) {
    int ones = 0;
    for (Index v : edge) ones += ds.labels[static_cast<std::size_t>(v)];
    EXPECT_TRUE(ones == 7 || ones == 8);
    EXPECT_EQ(std::set<Index>(edge.begin(), edge.end()).size(), edge.size());
  }
}

TEST(Sbm, DeterministicAndSeedSensitive) {
  const SbmParams p{50, 20, 6, 2, 4, 1.0, 77};
  EXPECT_EQ(to_json(generate_sbm(p)), to_json(generate_sbm(p)));
  SbmParams q = p;
  q.seed = 78;
  EXPECT_NE(to_json(generate_sbm(p)), to_json(generate_sbm(q)));
}

TEST(Sbm, FeatureMomentsFollowClassMeans) {
  const Dataset ds = generate_sbm({2000, 400, 15, 1, 8, 1.0, 1});
  for (int c = 0; c < 2; ++c) {
    const auto block = ds.features.middleRows(c * 2000, 2000);
    EXPECT_NEAR(block.mean(), static_cast<double>(c), 0.02);
    const double var = (block.array() - block.mean()).square().mean();
    EXPECT_NEAR(std::sqrt(var), 1.0, 0.02);
  }
}

TEST(Sbm, RejectsInvalidParameters) {
  EXPECT_EQ(kind_of([] { generate_sbm({250, 100, 15, 0, 2, 1.0, 0}); }), ErrorKind::InvalidAlpha);
  EXPECT_EQ(kind_of([] { generate_sbm({250, 100, 15, 8, 2, 1.0, 0}); }), ErrorKind::InvalidAlpha);
  EXPECT_EQ(kind_of([] { generate_sbm({10, 100, 15, 1, 2, 1.0, 0}); }), ErrorKind::EdgeSizeExceedsClass);
}

TEST(FeatureNoise, ZeroRateIsIdentity) {
  SplitMix64 rng(2);
  const NodeSignal x = testing::random_signal(rng, 10, 4);
  for (auto kind : {FeatureNoise::Gaussian, FeatureNoise::Uniform, FeatureNoise::Mask}) {
    EXPECT_EQ(perturb_features(x, kind, 0.0, 1), x);
  }
}

TEST(FeatureNoise, FullMaskZeroes) {
  SplitMix64 rng(2);
  const NodeSignal x = testing::random_signal(rng, 10, 4);
  EXPECT_TRUE(perturb_features(x, FeatureNoise::Mask, 1.0, 1).isZero(0.0));
}

TEST(FeatureNoise, GaussianScale) {
  const NodeSignal x = NodeSignal::Constant(500, 250, 3.0);
  const NodeSignal y = perturb_features(x, FeatureNoise::Gaussian, 0.3, 8);
  const NodeSignal diff = y - x;
  const double mean = diff.mean();
  const double sd = std::sqrt((diff.array() - mean).square().sum() / static_cast<double>(diff.size() - 1));
  EXPECT_LT(std::abs(sd - 0.3) / 0.3, 0.05);
}

TEST(FeatureNoise, UniformWithinRate) {
  const NodeSignal x = NodeSignal::Zero(100, 10);
  const NodeSignal y = perturb_features(x, FeatureNoise::Uniform, 0.2, 8);
  EXPECT_LE(y.cwiseAbs().maxCoeff(), 0.2);
  EXPECT_GT(y.cwiseAbs().maxCoeff(), 0.15);
}

TEST(FeatureNoise, InvalidRate) {
  const NodeSignal x = NodeSignal::Zero(2, 2);
  EXPECT_EQ(kind_of([&] { perturb_features(x, FeatureNoise::Mask, 1.5, 0); }), ErrorKind::InvalidRate);
  EXPECT_EQ(kind_of([&] { perturb_features(x, FeatureNoise::Mask, -0.1, 0); }), ErrorKind::InvalidRate);
}

TEST(StructureNoise, ZeroRateIdentity) {
  SplitMix64 rng(4);
  const Hypergraph hg = testing::random_hypergraph(rng, 30, 20, 6);
  EXPECT_EQ(perturb_structure(hg, 0.0, 1), hg);
}

TEST(StructureNoise, PreservesCountsAndValidates) {
  const Dataset ds = generate_sbm({100, 100, 10, 1, 1, 1.0, 2});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Hypergraph out = perturb_structure(ds.hypergraph, 0.4, seed);
    EXPECT_EQ(out.edge_count(), 100);
    EXPECT_EQ(out.node_count(), ds.hypergraph.node_count());
    EXPECT_EQ(parse_hypergraph(to_text(out)), out);
  }
}

TEST(StructureNoise, ReplacesFloorRateEdges) {
  const Dataset ds = generate_sbm({100, 100, 10, 1, 1, 1.0, 2});
  const Hypergraph out = perturb_structure(ds.hypergraph, 0.4, 17);
  const auto& original = ds.hypergraph.edges();
  int kept = 0;
  for (Index e = 0; e < 60; ++e) kept += std::find(original.begin(), original.end(), out.edge(e)) != original.end();
  EXPECT_EQ(kept, 60);
}

TEST(StructureNoise, Deterministic) {
  const Dataset ds = generate_sbm({60, 60, 8, 2, 1, 1.0, 5});
  EXPECT_EQ(perturb_structure(ds.hypergraph, 0.3, 4), perturb_structure(ds.hypergraph, 0.3, 4));
}

TEST(Rng, KnownSplitMixSequence) {
  SplitMix64 rng(1234567);
  EXPECT_EQ(rng.next(), 6457827717110365317ULL);
  EXPECT_EQ(rng.next(), 3203168211198807973ULL);
}

}  // namespace
}  // namespace hnd
