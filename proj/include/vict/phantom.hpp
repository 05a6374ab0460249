#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vict/keyvalue.hpp"
#include "vict/motion.hpp"
#include "vict/removal.hpp"
#include "vict/volume.hpp"

namespace vict {

struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Vec3 radii = Vec3::Ones();
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 1.0;
};

/// Signed depth (mm) of p inside a primitive: positive inside, negative outside.
double depth_in(const Sphere& s, const Vec3& p);
double depth_in(const Capsule& c, const Vec3& p);

/// Bone block with air cavities and channels lined by soft tissue. All
/// positions are world millimetres.
struct PhantomSpec {
  Geometry geometry;
  Vec3 block_min = Vec3::Zero();
  Vec3 block_max = Vec3::Zero();
  std::vector<Ellipsoid> cavities;
  std::vector<Capsule> channels;  // air passages present before surgery
  std::vector<Sphere> carve_spheres;
  std::vector<Capsule> carve_capsules;
  std::int16_t bone_hu = 700;
  std::int16_t soft_hu = 40;
  std::int16_t air_hu = -1000;
  double hu_noise = 10.0;     // HU standard deviation
  double lining_mm = 1.5;     // soft tissue around cavities and channels
  double roi_margin_mm = 5.0; // roi = carve region grown by this margin
  std::uint64_t seed = 1;

  void validate() const;
  /// Depth of p in the carve region (max over primitives).
  double carve_depth(const Vec3& p) const;
};

/// Anatomy of fixed millimetre size centred in a dims x spacing lattice.
PhantomSpec default_phantom_spec(const Index3& dims = {128, 128, 128}, double spacing = 1.0);

struct Phantom {
  PhantomSpec spec;
  HuVolume preop;
  HuVolume intraop;
  MaskVolume carve;  // voxels whose centre lies in the carve region
  MaskVolume truth;  // carve voxels that were tissue
  MaskVolume roi;
};

/// Throws InputError when the carve region covers no voxel or no tissue.
Phantom generate_phantom(const PhantomSpec& spec);

struct SimulationSpec {
  double sampling_rate = 15.0;  // Hz, per tool
  double tracking_rate = 0.72;
  NoiseModel noise{0.37};
  double duration = 400.0;       // s
  double transit_speed = 20.0;   // mm/s through the access channel; 0 skips transit
  double depth_bias_mm = 3.0;    // dwell at a carve voxel ~ depth + bias
  std::uint64_t seed = 1;
  /// Where the instrument enters; the shaft pivots about it. Defaults to the
  /// outer end of the first channel.
  std::optional<Vec3> entry;
  /// Fixed endoscope pose; defaults to a point midway along the first channel
  /// looking inward.
  std::optional<Vec3> endoscope_tip;
  std::optional<Vec3> endoscope_axis;
  Vec3 endoscope_normal = Vec3::UnitZ();
  bool with_endoscope = true;

  void validate() const;
};

/// 15 Hz, 72 % tracking, 0.37 mm noise.
SimulationSpec table1_preset();

/// Instrument tip transits the entry channel, sweeps every carve voxel centre
/// in serpentine order with dwell proportional to carve depth plus bias, then
/// withdraws. Samples are independently dropped and noised.
MotionTrace simulate_trace(const Phantom& phantom, const SimulationSpec& sim);

/// Straight 1 mm instrument shaft and 2 mm endoscope along each tool's axis.
InstrumentGeometry default_instrument_geometry();

/// Overrides entries of `base` from a `[phantom]` section.
PhantomSpec parse_phantom_spec(const KeyValueTree& tree, PhantomSpec base);
/// Overrides entries of `base` from a `[simulation]` section; `preset = table1`
/// resets to the preset before the other keys apply.
SimulationSpec parse_simulation_spec(const KeyValueTree& tree, SimulationSpec base);

}  // namespace vict
