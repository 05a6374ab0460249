#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vict/streaming.hpp"

namespace vict {

/// Preoperative CT with the estimated removal rewritten to the minimum
/// preoperative intensity found inside the mask.
struct VirtualCT {
  HuVolume volume;
  MaskVolume mask;
  /// Unset when the mask is empty.
  std::optional<std::int16_t> replacement;
  std::uint64_t revision = 0;
};

VirtualCT synthesize(const HuVolume& preop, const MaskVolume& mask);

/// Immutable view of a session at one revision. Slices are shared with the
/// session until it next writes them.
class VctSnapshot {
 public:
  using Slice = std::vector<std::int16_t>;

  VctSnapshot() = default;
  VctSnapshot(Geometry g, std::vector<std::shared_ptr<const Slice>> slices,
              std::optional<std::int16_t> replacement, std::uint64_t revision,
              std::size_t mask_voxels)
      : geometry_(std::move(g)),
        slices_(std::move(slices)),
        replacement_(replacement),
        revision_(revision),
        mask_voxels_(mask_voxels) {}

  const Geometry& geometry() const { return geometry_; }
  std::uint64_t revision() const { return revision_; }
  std::optional<std::int16_t> replacement() const { return replacement_; }
  std::size_t mask_voxels() const { return mask_voxels_; }

  std::int16_t at(std::size_t linear) const;
  HuVolume materialize() const;

 private:
  Geometry geometry_;
  std::vector<std::shared_ptr<const Slice>> slices_;
  std::optional<std::int16_t> replacement_;
  std::uint64_t revision_ = 0;
  std::size_t mask_voxels_ = 0;
};

/// Single-writer incremental virtual CT. update() feeds new samples to a
/// removal stream and applies the resulting mask changes, touching only the
/// affected z-slices. Readers take snapshots from any thread.
class VctSession {
 public:
  VctSession(HuVolume preop, Method method, const InstrumentGeometry& geometry,
             const EstimationOptions& resolved, std::size_t checkpoint_every = kCheckpointInterval);

  /// Returns the revision after the update; unchanged for an empty span.
  std::uint64_t update(std::span<const MotionSample> samples);
  /// Final checkpoint; afterwards the volume equals the batch result.
  std::uint64_t finish();

  VctSnapshot snapshot() const;
  std::uint64_t revision() const { return revision_; }
  const MaskVolume& mask() const { return mask_; }
  std::optional<std::int16_t> replacement() const { return replacement_; }
  const RemovalStream& stream() const { return *stream_; }
  /// Current state as a VirtualCT (copies the volume).
  VirtualCT current() const;

 private:
  void apply(const MaskDiff& diff);
  void write(std::size_t v, std::int16_t value);
  void add_member(std::size_t v);
  void remove_member(std::size_t v);
  void publish();

  HuVolume preop_;
  std::unique_ptr<RemovalStream> stream_;
  std::size_t slice_len_;
  std::vector<std::shared_ptr<VctSnapshot::Slice>> slices_;
  MaskVolume mask_;
  std::vector<std::size_t> members_;
  std::unordered_map<std::size_t, std::size_t> member_pos_;
  std::optional<std::int16_t> replacement_;
  std::uint64_t revision_ = 0;
  MaskDiff diff_;

  mutable std::mutex published_mutex_;
  VctSnapshot published_;
};

/// Feeds `samples` to `session`; equivalent to session.update(samples).
std::uint64_t update_incremental(VctSession& session, std::span<const MotionSample> samples);

}  // namespace vict
