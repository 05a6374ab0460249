#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vict/gpr.hpp"
#include "vict/motion.hpp"
#include "vict/volume.hpp"

namespace vict {

enum class Method { kTip, kTrajectory, kBody };

const char* method_name(Method m);
Method parse_method(const std::string& s);

/// Per-voxel residence sums in first-touch order. Sums accumulate in deposit
/// order, so two accumulators fed the same deposits agree bit-for-bit.
class SparseDensity {
 public:
  void deposit(std::size_t voxel, double weight);
  std::size_t size() const { return voxels_.size(); }
  std::span<const std::size_t> voxels() const { return voxels_; }
  std::span<const double> values() const { return values_; }
  double value_of(std::size_t voxel) const;

 private:
  std::vector<std::size_t> voxels_;
  std::vector<double> values_;
  std::unordered_map<std::size_t, std::size_t> slot_;
};

/// Normalised residence duration per voxel.
using TipDensityGrid = DensityVolume;

/// Weight of each point: time to the next point, capped; the last point gets 0.
std::vector<double> residence_weights(std::span<const TimedPoint> points, double cap);

/// Valid instrument tips of `trace` deposited with residence_weights and
/// divided by the instrument trace duration. The caller smooths beforehand.
TipDensityGrid accumulate_density(const MotionTrace& trace, const Geometry& ct,
                                  double max_interval = 1.0);

struct DensityHistogram {
  int levels = 256;
  /// v[d] = voxels at quantised level d; v[0] is always 0 (unvisited voxels excluded).
  std::vector<std::uint64_t> v;
  /// Mean of v over levels 1..L-1.
  double th = 0.0;
  double max_density = 0.0;
};

/// Level of a positive density: ceil(d / max * (L-1)) clamped to [1, L-1]; 0 for d <= 0.
int quantize_level(double density, double max_density, int levels);

DensityHistogram quantize_histogram(std::span<const double> densities, int levels);
DensityHistogram quantize_histogram(const TipDensityGrid& density, int levels);

/// Gradient with central differences inside and one-sided differences at the ends.
std::vector<double> gradient(std::span<const double> v);

struct ThresholdChoice {
  int level = 1;
  bool fallback = false;
};

/// Smallest level d in 1..L-1 with v''(d) > th and v'''(d) <= th, derivatives
/// taken over levels 1..L-1. Without a qualifying level, the ceiling of the
/// mean of the occupied levels is used and `fallback` is set.
ThresholdChoice auto_threshold(const DensityHistogram& hist);

struct RemovalMask {
  MaskVolume mask;
  Method provenance = Method::kTip;
};

struct CapsuleSegment {
  Tool tool = Tool::kInstrument;
  Vec3 start = Vec3::Zero();  // mm, tool frame
  Vec3 end = Vec3::Zero();
  double radius = 1.0;
};

struct InstrumentGeometry {
  std::vector<CapsuleSegment> segments;
  bool has(Tool t) const;
};

/// Lines `tool, x0,y0,z0, x1,y1,z1, radius`; blank lines and `#` comments skipped.
InstrumentGeometry parse_instrument_geometry(const std::string& text);
InstrumentGeometry read_instrument_geometry(const std::string& path);
std::string format_instrument_geometry(const InstrumentGeometry& g);

struct EstimationOptions {
  int levels = 256;
  NoiseModel noise;
  /// Smoothing bandwidth (s); 5 median sample intervals when absent.
  std::optional<double> bandwidth;
  double max_interval = 1.0;
  // trajectory
  std::optional<double> step;
  std::optional<KernelSpec> kernel;
  std::size_t max_training = 4000;
  ProjectionOptions projection;
  // body
  bool body_any_touch = false;
};

/// Fills bandwidth (and, for the trajectory method, step) from a full trace so
/// that batch and streaming runs share identical parameters.
EstimationOptions resolve_options(const MotionTrace& trace, const Geometry& ct,
                                  const EstimationOptions& opts);

struct Estimate {
  RemovalMask mask;
  ThresholdChoice threshold;
  DensityHistogram histogram;
  /// Per-tool results for the body method (instrument then endoscope).
  std::vector<ThresholdChoice> tool_thresholds;
  double bandwidth = 0.0;
  double step = 0.0;
  std::size_t dense_points = 0;
  std::optional<KernelSpec> kernel;
  double jitter = 0.0;
};

Estimate method_tip(const MotionTrace& trace, const Geometry& ct, const EstimationOptions& opts);
Estimate method_trajectory(const MotionTrace& trace, const Geometry& ct,
                           const EstimationOptions& opts);
/// Ascending voxel indices selected by the trajectory method; fills
/// `details` (without the mask) when given.
std::vector<std::size_t> trajectory_voxels(const MotionTrace& trace, const Geometry& ct,
                                           const EstimationOptions& opts, Estimate* details = nullptr);
Estimate method_body(const MotionTrace& trace, const Geometry& ct,
                     const InstrumentGeometry& geometry, const EstimationOptions& opts);

/// Linear indices of voxels at or above the chosen level.
std::vector<std::size_t> select_voxels(const SparseDensity& raw, double duration,
                                       int levels, ThresholdChoice* choice,
                                       DensityHistogram* hist);

/// World-frame capsule endpoints for one sample pose.
std::pair<WorldPoint, WorldPoint> place_segment(const EndoscopeFrame& pose, const CapsuleSegment& seg);

/// Voxels covered by all segments of `tool` at this pose, ascending, unique.
std::vector<std::size_t> body_voxels(const Geometry& ct, const EndoscopeFrame& pose,
                                     const InstrumentGeometry& geometry, Tool tool);

}  // namespace vict
