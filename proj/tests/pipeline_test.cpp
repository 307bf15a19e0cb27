#include <gtest/gtest.h>

#include "kineflow/pipeline.hpp"
#include "kineflow/synthgen.hpp"

using namespace kineflow;

TEST(Pipeline, ForwardDollySingleSourceTrackedAcrossFrames) {
  const auto seq = synth::render(synth::forward_dolly(5, 150, 0.0, 1));
  pipeline::Options opts;
  opts.k = 1;
  const auto res = pipeline::analyze_sequence(seq.frames, opts);
  ASSERT_EQ(res.frames.size(), 5u);
  for (std::size_t f = 0; f < res.frames.size(); ++f) {
    const auto& ca = res.frames[f].clusters.at(0);
    ASSERT_TRUE(ca.pencil);
    EXPECT_EQ(ca.pencil->kind, flow::PencilKind::source);
    EXPECT_NEAR((ca.pencil->point() - Vec2(320, 240)).norm(), 0.0, 1e-6);
    ASSERT_TRUE(ca.region);
    EXPECT_EQ(ca.region->id, 0);
    if (f > 0) EXPECT_EQ(ca.previous_region, 0);
  }
  ASSERT_EQ(res.tracks.size(), 1u);
  EXPECT_EQ(res.tracks[0].kinematics.size(), 5u);
}

TEST(Pipeline, PencilMembersIndexTheField) {
  const auto seq = synth::render(synth::two_bodies(2, 1.0, 40, 0.0, 3));
  int next = 0;
  const auto fa = pipeline::analyze_frame(seq.frames[0], {}, next);
  ASSERT_EQ(fa.clusters.size(), 2u);
  for (const auto& ca : fa.clusters) {
    ASSERT_TRUE(ca.pencil);
    for (std::size_t m : ca.pencil->members)
      EXPECT_NE(std::find(ca.cluster.members.begin(), ca.cluster.members.end(), m), ca.cluster.members.end());
  }
  EXPECT_EQ(next, 2);
}

TEST(Pipeline, EmptyFieldIsMissingData) {
  flow::FlowField f;
  int next = 0;
  try {
    pipeline::analyze_frame(f, {}, next);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_data);
  }
}

TEST(Pipeline, StaticSceneWarnsInsteadOfFailing) {
  flow::FlowField f;
  for (int i = 0; i < 6; ++i) f.samples.push_back({Vec2(i, i * i), Vec2(0, 0), 1.0});
  f.samples.push_back({Vec2(3, 1), Vec2(1, 0), 1.0});
  f.samples.push_back({Vec2(4, 2), Vec2(1, 0), 1.0});
  f.samples.push_back({Vec2(5, 0), Vec2(1, 0), 1.0});
  int next = 0;
  pipeline::Options opts;
  opts.k = 1;
  const auto fa = pipeline::analyze_frame(f, {}, next, opts);
  ASSERT_EQ(fa.clusters.size(), 1u);
  EXPECT_EQ(fa.clustering.background.size(), 6u);
  EXPECT_TRUE(fa.clusters[0].region);
}
