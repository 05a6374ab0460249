#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "vict/removal.hpp"

namespace vict {

/// Voxels entering and leaving a removal mask during one update.
struct MaskDiff {
  std::vector<std::size_t> added;
  std::vector<std::size_t> removed;

  bool empty() const { return added.empty() && removed.empty(); }
  void clear() {
    added.clear();
    removed.clear();
  }
};

/// Residence accumulation for one tool fed sample by sample. A valid sample
/// is deposited once its successor is known and enough later samples exist
/// to smooth it exactly as the batch smoother would; deposits therefore
/// reach the same sums, in the same order, as the batch pipeline.
class ResidenceStream {
 public:
  /// Voxels covered by a (smoothed) sample; appended to `out`.
  using Footprint = std::function<void(const MotionSample&, std::vector<std::size_t>& out)>;

  ResidenceStream(Tool tool, double bandwidth, double max_shift, double max_interval,
                  Footprint footprint);

  /// Samples of other tools are ignored. Deposited voxels are appended to `touched`.
  void push(const MotionSample& s, std::vector<std::size_t>& touched);
  /// Deposits everything still pending (end of trace).
  void flush(std::vector<std::size_t>& touched);

  Tool tool() const { return tool_; }
  const SparseDensity& raw() const { return raw_; }
  /// First to last sample of this tool, valid or not.
  double duration() const { return seen_ ? last_t_ - first_t_ : 0.0; }
  std::size_t valid_count() const { return valid_count_; }

 private:
  void deposit_ready(bool final, std::vector<std::size_t>& touched);
  void deposit_one(double weight, std::vector<std::size_t>& touched);

  Tool tool_;
  double bandwidth_;
  double max_shift_;
  double max_interval_;
  Footprint footprint_;
  std::vector<MotionSample> buffer_;  // valid samples, oldest kept for smoothing context
  std::size_t next_ = 0;              // first undeposited entry of buffer_
  SparseDensity raw_;
  std::vector<std::size_t> scratch_;
  bool seen_ = false;
  double first_t_ = 0.0;
  double last_t_ = 0.0;
  std::size_t valid_count_ = 0;
};

/// Incremental removal estimation. Masks are re-derived at checkpoints (every
/// `checkpoint_every` instrument samples and at finish); between checkpoints
/// the tip and body estimators add voxels that pass the previous checkpoint's
/// threshold. Intermediate trajectory checkpoints use a reduced training set.
class RemovalStream {
 public:
  virtual ~RemovalStream() = default;

  /// Appends mask changes caused by `s` to `diff`. Throws InputError on a
  /// timestamp regression.
  virtual void push(const MotionSample& s, MaskDiff& diff) = 0;
  /// Flushes pending samples and runs a final checkpoint. After finish the
  /// mask equals the batch estimate over every pushed sample.
  virtual void finish(MaskDiff& diff) = 0;

  virtual std::size_t checkpoints() const = 0;
  /// Threshold choice from the latest checkpoint (instrument for body).
  virtual ThresholdChoice threshold() const = 0;
};

inline constexpr std::size_t kCheckpointInterval = 64;
/// Training pairs used by intermediate trajectory checkpoints. The final
/// checkpoint fits with the full options.
inline constexpr std::size_t kPreviewTraining = 256;

/// `opts` must already be resolved (see resolve_options) so that batch and
/// streaming runs share bandwidth and step.
std::unique_ptr<RemovalStream> make_removal_stream(Method method, const Geometry& ct,
                                                   const InstrumentGeometry& geometry,
                                                   const EstimationOptions& opts,
                                                   std::size_t checkpoint_every = kCheckpointInterval);

}  // namespace vict
