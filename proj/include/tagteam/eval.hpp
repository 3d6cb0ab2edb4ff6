#pragma once

// Trajectory synchronization evaluation: dynamic time warping, a bounded
// similarity score on shape-normalized trajectories, and lag estimation.

#include <cstddef>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tagteam::eval {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

enum class Units { Meters, Pixels };

struct Sample {
  double t = 0.0;
  Point2 p;
};

struct Trajectory {
  std::vector<Sample> points;  // strictly increasing t
  std::string label;
  Units units = Units::Meters;
};

/// Throws Error(InvalidInput) if empty, non-finite, or t not strictly increasing.
void validate(const Trajectory& traj);

struct DtwResult {
  double distance = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> path;
};

/// Classic DTW with Euclidean point cost and steps (i-1,j), (i,j-1),
/// (i-1,j-1). The path runs from (0,0) to (|a|-1,|b|-1). Among equal-cost
/// predecessors backtracking prefers the diagonal, then (i-1,j).
DtwResult dtw(std::span<const Point2> a, std::span<const Point2> b);

/// Centroid at origin, farthest point at distance 1. All-equal input is only
/// translated.
std::vector<Point2> normalize_shape(std::span<const Point2> points);

/// Linear interpolation of `traj` at each time in `grid`, clamped to its span.
std::vector<Point2> resample(const Trajectory& traj, std::span<const double> grid);

struct SyncReport {
  double dtw_distance = 0.0;  // in normalized units
  double similarity = 1.0;    // 1 / (1 + dtw_distance / path_length)
  std::size_t path_length = 0;
  double lag_estimate = 0.0;  // seconds; positive when b trails a
};

/// Similarity in [0, 1]; 1 means the shape-normalized, resampled traces align
/// with zero cost.
double similarity(const Trajectory& a, const Trajectory& b);

/// Both trajectories are shape-normalized and resampled onto a shared
/// uniform grid of max(|a|, |b|) points spanning the overlap of their time
/// ranges (each keeps its own span when they do not overlap). The lag is the
/// integer grid shift in [-N/2, N/2] minimizing the mean aligned distance,
/// shifts within 1e-9 of the best count as tied and resolve toward the
/// smaller shift; the result is converted to seconds.
SyncReport sync_report(const Trajectory& a, const Trajectory& b);

std::string to_json(const SyncReport& report);
std::string summary(const SyncReport& report);

/// Reads `frame,label,xmin,ymin,xmax,ymax` rows into one pixel-unit
/// trajectory per label, using box centers at t = frame / fps.
std::map<std::string, Trajectory> load_annotations(std::istream& in, double fps = 30.0);
std::map<std::string, Trajectory> load_annotations(const std::string& path, double fps = 30.0);

}  // namespace tagteam::eval
