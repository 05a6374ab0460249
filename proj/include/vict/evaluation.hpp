#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vict/keyvalue.hpp"
#include "vict/motion.hpp"
#include "vict/volume.hpp"

namespace vict {

enum class Interpolation { kNearest, kTrilinear };

inline constexpr std::int16_t kAirHu = -1024;
inline constexpr std::int16_t kTissueThresholdHu = -800;

/// Samples `moving` on the `reference` lattice. `reference_to_moving` maps a
/// reference-frame world point to the moving volume's world frame. Voxels that
/// fall outside the moving field read kAirHu.
HuVolume resample(const HuVolume& moving, const RigidTransform& reference_to_moving,
                  const Geometry& reference, Interpolation interp);
/// Masks are always resampled nearest; outside the field reads 0.
MaskVolume resample(const MaskVolume& moving, const RigidTransform& reference_to_moving,
                    const Geometry& reference);

/// `rotation` (9 reals, row-major) and `translation` (3 reals) keys.
RigidTransform read_transform(const std::filesystem::path& path);
void write_transform(const std::filesystem::path& path, const RigidTransform& t);

/// Tissue in preop (>= threshold) that is gone in intraop (< threshold), within roi.
MaskVolume ground_truth_removal(const HuVolume& preop, const HuVolume& intraop_aligned,
                                std::int16_t hu_threshold = kTissueThresholdHu,
                                const MaskVolume* roi = nullptr);

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const MaskVolume& estimated, const MaskVolume& truth,
                          const MaskVolume* region = nullptr);

struct Metrics {
  double dsc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  bool dsc_degenerate = false;
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool fscore_degenerate = false;
  /// Set when DSC and F-score disagree beyond rounding; they should not.
  bool dsc_fscore_diverge = false;
};

Metrics metrics(const ConfusionCounts& c);

/// Directed sup-inf distance (mm) between voxel-centre sets; both must be non-empty.
double directed_hausdorff(const MaskVolume& from, const MaskVolume& to);
/// Symmetric Hausdorff distance in mm over voxel centres. Throws ComputeError
/// if either mask is empty.
double hausdorff(const MaskVolume& a, const MaskVolume& b);

enum class Opening { kNot = 0, kPartial = 1, kFull = 2 };

/// Maxillary, anterior ethmoid, posterior ethmoid and sphenoid sinuses, left and right.
inline constexpr std::array<const char*, 8> kSites{"ms_l", "ms_r", "ae_l", "ae_r",
                                                    "pe_l", "pe_r", "s_l",  "s_r"};

struct CompletenessRating {
  std::array<std::optional<Opening>, 8> sites;
};

Opening parse_opening(const std::string& s);
const char* opening_name(Opening o);
/// Flat `site = not|partial|full` entries for every site in kSites.
CompletenessRating parse_rating(const KeyValueTree& tree);
CompletenessRating read_rating_file(const std::filesystem::path& path);

/// 0 for agreement, 0.5 for adjacent states, 1 for not vs fully opened.
double site_distance(Opening rated, Opening reference);

struct CompletenessScore {
  std::array<double, 8> distance{};
  double precision = 0.0;  // percent
};

/// Throws InputError unless both ratings cover all eight sites.
CompletenessScore completeness_score(const CompletenessRating& rated,
                                     const CompletenessRating& reference);

struct RegionReport {
  std::string label;
  ConfusionCounts counts;
  Metrics metrics;
  double hausdorff = 0.0;
  bool hausdorff_defined = false;
};

/// Metrics of `estimated` vs `truth` restricted to `region` (whole volume if null).
RegionReport evaluate_region(const std::string& label, const MaskVolume& estimated,
                             const MaskVolume& truth, const MaskVolume* region);

struct EvaluationReport {
  std::optional<TraceStats> stats;
  std::vector<RegionReport> regions;
  std::vector<std::string> rating_names;
  std::vector<CompletenessScore> completeness;
  std::optional<double> completeness_overall;
};

std::string format_report(const EvaluationReport& r);

}  // namespace vict
