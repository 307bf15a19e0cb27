#pragma once

// Per-frame kinematic segmentation: cluster, drop outliers, fit a pencil per
// cluster, build regions weighted against the previous frame, and link
// centroids over the sequence.

#include <optional>
#include <string>
#include <vector>

#include "kineflow/error.hpp"
#include "kineflow/flow_analysis.hpp"

namespace kineflow::pipeline {

struct Options {
  int k = 2;
  double nsigma = 3.0;
  std::uint64_t seed = 0;
  flow::PencilOptions pencil;
  double background_threshold = 1e-9;
};

struct ClusterAnalysis {
  flow::Cluster cluster;
  std::vector<std::size_t> kept;  ///< members after outlier removal
  std::optional<flow::LinePencil> pencil;
  std::optional<flow::KinematicRegion> region;
  std::optional<int> previous_region;  ///< id of the matched region one frame back
};

struct FrameAnalysis {
  int t = 0;
  flow::ClusterResult clustering;
  std::vector<ClusterAnalysis> clusters;
  double apparent_kinetic_energy = 0.0;
  std::vector<std::string> warnings;

  std::vector<flow::KinematicRegion> regions() const {
    std::vector<flow::KinematicRegion> out;
    for (const auto& c : clusters)
      if (c.region) out.push_back(*c.region);
    return out;
  }
};

inline FrameAnalysis analyze_frame(const flow::FlowField& field, const std::vector<flow::KinematicRegion>& previous,
                                   int& next_region_id, const Options& opts = {}) {
  if (field.samples.empty()) throw Error(ErrorCode::missing_data, "flow field has no samples");
  field.validate();
  FrameAnalysis out;
  out.t = field.t;
  out.apparent_kinetic_energy = flow::apparent_kinetic_energy(field);
  flow::ClusterOptions copts;
  copts.seed = opts.seed;
  copts.speed_floor = opts.pencil.speed_floor;
  out.clustering = flow::kinematic_cluster(field, opts.k, copts);
  const flow::RegionOptions ropts{opts.background_threshold};

  for (std::size_t c = 0; c < out.clustering.clusters.size(); ++c) {
    ClusterAnalysis ca;
    ca.cluster = out.clustering.clusters[c];
    const std::string tag = "frame " + std::to_string(field.t) + " cluster " + std::to_string(c) + ": ";
    if (ca.cluster.members.empty()) {
      out.warnings.push_back(tag + "empty cluster");
      out.clusters.push_back(std::move(ca));
      continue;
    }
    ca.kept = flow::remove_outliers(ca.cluster.members, field, opts.nsigma);
    std::vector<flow::FlowSample> kept;
    for (std::size_t i : ca.kept) kept.push_back(field.samples[i]);
    try {
      flow::LinePencil p = flow::estimate_vanishing_point(kept, opts.pencil);
      for (auto& m : p.members) m = ca.kept[m];
      ca.pencil = std::move(p);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::no_motion) throw;
      out.warnings.push_back(tag + e.what());
    }
    try {
      flow::KinematicRegion r = flow::build_region(ca.kept, field, nullptr, ropts);
      std::optional<std::size_t> match;
      try {
        match = flow::match_region(r, previous);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ambiguous_track) throw;
        out.warnings.push_back(tag + e.what() + "; left unmatched");
      }
      if (match) {
        const auto& prev = previous[*match];
        r = flow::build_region(ca.kept, field, &prev, ropts);
        r.id = prev.id;
        ca.previous_region = prev.id;
      } else {
        r.id = next_region_id++;
      }
      ca.region = std::move(r);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::degenerate_hull) throw;
      out.warnings.push_back(tag + e.what());
    }
    out.clusters.push_back(std::move(ca));
  }
  return out;
}

struct SequenceAnalysis {
  std::vector<FrameAnalysis> frames;
  std::vector<flow::CentroidTrack> tracks;
  std::vector<std::string> warnings;
};

/// Frames are analysed in the given order; tracks need >= 4 frames.
inline SequenceAnalysis analyze_sequence(const std::vector<flow::FlowField>& fields, const Options& opts = {}) {
  SequenceAnalysis out;
  int next_id = 0;
  std::vector<flow::KinematicRegion> previous;
  for (const auto& f : fields) {
    out.frames.push_back(analyze_frame(f, previous, next_id, opts));
    previous = out.frames.back().regions();
    for (const auto& w : out.frames.back().warnings) out.warnings.push_back(w);
  }
  if (out.frames.size() >= 4) {
    std::vector<std::vector<flow::KinematicRegion>> regions;
    for (const auto& f : out.frames) regions.push_back(f.regions());
    try {
      out.tracks = flow::track_centroids(regions);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ambiguous_track) throw;
      out.warnings.push_back(std::string("tracking skipped: ") + e.what());
    }
  }
  return out;
}

}  // namespace kineflow::pipeline
