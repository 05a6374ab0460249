#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vict/geometry.hpp"

namespace vict {

enum class Tool { kInstrument, kEndoscope };

const char* tool_name(Tool t);

/// One navigator record. `axis` points from the tip toward the handle;
/// `normal` is the tracker plane normal. Geometry is meaningful only when valid.
struct MotionSample {
  double t = 0.0;
  Tool tool = Tool::kInstrument;
  bool valid = false;
  WorldPoint tip = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();
  Vec3 normal = Vec3::UnitY();

  friend bool operator==(const MotionSample&, const MotionSample&) = default;
};

struct MotionTrace {
  std::vector<MotionSample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }

  MotionTrace of_tool(Tool tool) const;
  /// Valid samples of one tool, time order preserved.
  std::vector<MotionSample> valid_of(Tool tool) const;

  /// Throws InputError on timestamp regression or non-finite times.
  void validate() const;
};

/// Line-delimited JSON records: {"t","tool","valid","tip","axis","norm"}.
MotionTrace parse_trace(std::istream& in);
MotionTrace parse_trace_text(const std::string& text);
MotionTrace read_trace_file(const std::string& path);
void write_trace(std::ostream& out, const MotionTrace& trace);
void write_trace_file(const std::string& path, const MotionTrace& trace);

struct TraceStats {
  double sampling_rate_high = 0.0;  // Hz
  double sampling_rate_low = 0.0;   // Hz
  double tracking_rate = 0.0;       // percent
  double duration = 0.0;            // s
  std::size_t valid_count = 0;
  std::size_t total_count = 0;
};

/// Rates are sample counts in half-open windows [t_i, t_i + window) anchored
/// at every sample whose window fits in the trace, divided by the window.
TraceStats compute_stats(const MotionTrace& trace, double window = 1.0);

struct NoiseModel {
  double sigma = 0.37;  // mm, isotropic zero-mean Gaussian
};

/// Median spacing between consecutive valid samples of one tool; 0 if < 2.
double median_interval(const MotionTrace& trace, Tool tool);

/// Kernel support of the smoother, in bandwidths.
inline constexpr double kSmoothingSupport = 3.0;

/// Gaussian-in-time weighted mean of the tips of `samples` (one tool, valid
/// only, time-ordered) around index i, summed in ascending index order over
/// |t_j - t_i| <= 3 * bandwidth. The displacement from the raw tip is clamped
/// to max_shift.
WorldPoint smooth_tip_at(std::span<const MotionSample> samples, std::size_t i, double bandwidth,
                         double max_shift);

/// Smooths valid tips per tool; invalid samples pass through untouched.
MotionTrace smooth_tips(const MotionTrace& trace, const NoiseModel& noise, double bandwidth);

/// Orthonormal right-handed frame. Columns of rotation() are x, y, z.
struct EndoscopeFrame {
  WorldPoint origin = Vec3::Zero();
  Vec3 x_axis = Vec3::UnitX();
  Vec3 y_axis = Vec3::UnitY();
  Vec3 z_axis = Vec3::UnitZ();

  Mat3 rotation() const;
  Vec3 to_local(const WorldPoint& p) const;
  WorldPoint to_world(const Vec3& q) const;
};

/// Frame from any valid sample's pose: x = axis, z = x cross normal, y = z cross x.
/// Throws ComputeError when axis and normal are within 1e-3 rad of parallel.
EndoscopeFrame build_tool_frame(const MotionSample& s);

/// As build_tool_frame, additionally requiring a valid endoscope sample.
EndoscopeFrame build_endoscope_frame(const MotionSample& s);

struct ProjectionOptions {
  double pair_window = 0.2;  // s
  /// When set, drop instrument tips outside a cone of this half-angle (radians)
  /// around the endoscope viewing direction (-x).
  std::optional<double> fov_half_angle;
};

/// Valid instrument samples re-expressed in the frame of the nearest-in-time
/// valid endoscope sample. frames[i] is the frame used for samples[i].
struct ProjectedTrace {
  MotionTrace local;
  std::vector<EndoscopeFrame> frames;
};

ProjectedTrace project_to_endoscope(const MotionTrace& trace, const ProjectionOptions& opts = {});

}  // namespace vict
