#include "vict/streaming.hpp"

#include <algorithm>
#include <utility>

namespace vict {

ResidenceStream::ResidenceStream(Tool tool, double bandwidth, double max_shift,
                                 double max_interval, Footprint footprint)
    : tool_(tool),
      bandwidth_(bandwidth),
      max_shift_(max_shift),
      max_interval_(max_interval),
      footprint_(std::move(footprint)) {
  if (!(bandwidth_ > 0.0)) throw InputError("residence stream: bandwidth must be positive");
}

void ResidenceStream::push(const MotionSample& s, std::vector<std::size_t>& touched) {
  if (s.tool != tool_) return;
  if (!seen_) first_t_ = s.t;
  last_t_ = s.t;
  seen_ = true;
  if (!s.valid) return;
  buffer_.push_back(s);
  ++valid_count_;
  deposit_ready(false, touched);
}

void ResidenceStream::flush(std::vector<std::size_t>& touched) { deposit_ready(true, touched); }

void ResidenceStream::deposit_ready(bool final, std::vector<std::size_t>& touched) {
  const double reach = kSmoothingSupport * bandwidth_;
  while (next_ < buffer_.size()) {
    const bool has_next = next_ + 1 < buffer_.size();
    // Same predicate the batch smoother uses to stop its window.
    if (!final && !(has_next && buffer_.back().t - buffer_[next_].t > reach)) break;
    const double w = has_next ? std::min(buffer_[next_ + 1].t - buffer_[next_].t, max_interval_) : 0.0;
    deposit_one(w, touched);
    ++next_;
  }
  if (next_ >= buffer_.size()) {
    if (!buffer_.empty() && next_ > 1) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(next_ - 1));
      next_ = 1;
    }
    return;
  }
  std::size_t stale = 0;
  const double tn = buffer_[next_].t;
  while (stale < next_ && tn - buffer_[stale].t > reach) ++stale;
  if (stale >= 256) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(stale));
    next_ -= stale;
  }
}

void ResidenceStream::deposit_one(double weight, std::vector<std::size_t>& touched) {
  MotionSample smoothed = buffer_[next_];
  smoothed.tip = smooth_tip_at(buffer_, next_, bandwidth_, max_shift_);
  scratch_.clear();
  footprint_(smoothed, scratch_);
  for (auto v : scratch_) {
    raw_.deposit(v, weight);
    touched.push_back(v);
  }
}

namespace {

class Membership {
 public:
  explicit Membership(std::size_t n) : count_(n, 0) {}

  void add(std::size_t v, MaskDiff& diff) {
    if (count_[v]++ == 0) diff.added.push_back(v);
  }
  void remove(std::size_t v, MaskDiff& diff) {
    if (--count_[v] == 0) diff.removed.push_back(v);
  }

 private:
  std::vector<std::uint8_t> count_;
};

struct Scale {
  bool ok = false;
  double duration = 0.0;
  double max_density = 0.0;
  int level = 1;
};

/// Tip and body estimators: one residence stream per tool, masks unioned.
class DensityRemovalStream final : public RemovalStream {
 public:
  DensityRemovalStream(const Geometry& ct, const EstimationOptions& opts, std::size_t every,
                       bool any_touch)
      : ct_(ct), opts_(opts), every_(std::max<std::size_t>(every, 1)), any_touch_(any_touch),
        union_(ct.voxel_count()) {}

  void add_part(ResidenceStream stream) {
    parts_.push_back(Part{std::move(stream), std::vector<std::uint8_t>(ct_.voxel_count(), 0), {},
                          {}, {}});
  }

  void push(const MotionSample& s, MaskDiff& diff) override {
    if (any_ && s.t < last_t_) throw InputError("stream: timestamp regression");
    any_ = true;
    last_t_ = s.t;
    for (auto& part : parts_) {
      touched_.clear();
      part.stream.push(s, touched_);
      provisional(part, diff);
    }
    if (s.tool == Tool::kInstrument && ++instrument_count_ % every_ == 0) checkpoint(false, diff);
  }

  void finish(MaskDiff& diff) override {
    for (auto& part : parts_) {
      touched_.clear();
      part.stream.flush(touched_);
      provisional(part, diff);
    }
    checkpoint(true, diff);
  }

  std::size_t checkpoints() const override { return checkpoints_; }

  ThresholdChoice threshold() const override {
    for (const auto& part : parts_) {
      if (part.stream.valid_count() > 0) return part.choice;
    }
    return {};
  }

 private:
  struct Part {
    ResidenceStream stream;
    std::vector<std::uint8_t> flag;  // bit 0: member, bit 1: scratch
    std::vector<std::size_t> members;
    Scale scale;
    ThresholdChoice choice;
  };

  void provisional(Part& part, MaskDiff& diff) {
    for (auto v : touched_) {
      if (part.flag[v] & 1) continue;
      const double raw = part.stream.raw().value_of(v);
      bool take = false;
      if (any_touch_) {
        take = raw > 0.0;
      } else if (part.scale.ok) {
        take = quantize_level(raw / part.scale.duration, part.scale.max_density, opts_.levels) >=
               part.scale.level;
      }
      if (take) {
        part.flag[v] |= 1;
        part.members.push_back(v);
        union_.add(v, diff);
      }
    }
  }

  std::vector<std::size_t> selection(Part& part, bool final) {
    std::vector<std::size_t> sel;
    const auto& raw = part.stream.raw();
    if (any_touch_) {
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw.values()[i] > 0.0) sel.push_back(raw.voxels()[i]);
      }
      std::sort(sel.begin(), sel.end());
      part.choice = {1, false};
      return sel;
    }
    if (part.stream.valid_count() == 0) return sel;
    try {
      DensityHistogram hist;
      const double duration = part.stream.duration();
      sel = select_voxels(raw, duration, opts_.levels, &part.choice, &hist);
      part.scale = {true, duration, hist.max_density, part.choice.level};
    } catch (const ComputeError&) {
      if (final) throw;
      part.scale = {};
    }
    return sel;
  }

  void checkpoint(bool final, MaskDiff& diff) {
    ++checkpoints_;
    for (auto& part : parts_) {
      const auto sel = selection(part, final);
      for (auto v : sel) part.flag[v] |= 2;
      for (auto v : part.members) {
        if (!(part.flag[v] & 2)) {
          part.flag[v] = 0;
          union_.remove(v, diff);
        }
      }
      for (auto v : sel) {
        if (!(part.flag[v] & 1)) union_.add(v, diff);
        part.flag[v] = 1;
      }
      part.members = sel;
    }
  }

  Geometry ct_;
  EstimationOptions opts_;
  std::size_t every_;
  bool any_touch_;
  std::vector<Part> parts_;
  Membership union_;
  std::vector<std::size_t> touched_;
  std::size_t instrument_count_ = 0;
  std::size_t checkpoints_ = 0;
  bool any_ = false;
  double last_t_ = 0.0;
};

/// Re-runs the batch trajectory estimator on the trace so far at every checkpoint.
class TrajectoryRemovalStream final : public RemovalStream {
 public:
  TrajectoryRemovalStream(const Geometry& ct, const EstimationOptions& opts, std::size_t every)
      : ct_(ct), opts_(opts), preview_(opts), every_(std::max<std::size_t>(every, 1)) {
    preview_.max_training = std::min(opts.max_training, kPreviewTraining);
  }

  void push(const MotionSample& s, MaskDiff& diff) override {
    if (!trace_.empty() && s.t < trace_.samples.back().t) {
      throw InputError("stream: timestamp regression");
    }
    trace_.samples.push_back(s);
    if (s.tool == Tool::kInstrument && ++instrument_count_ % every_ == 0) checkpoint(false, diff);
  }

  void finish(MaskDiff& diff) override {
    bool any_valid = false;
    for (const auto& s : trace_.samples) any_valid = any_valid || (s.valid && s.tool == Tool::kInstrument);
    if (any_valid) checkpoint(true, diff);
  }

  std::size_t checkpoints() const override { return checkpoints_; }
  ThresholdChoice threshold() const override { return choice_; }

 private:
  void checkpoint(bool final, MaskDiff& diff) {
    ++checkpoints_;
    std::vector<std::size_t> sel;
    try {
      Estimate est;
      sel = trajectory_voxels(trace_, ct_, final ? opts_ : preview_, &est);
      choice_ = est.threshold;
    } catch (const ComputeError&) {
      if (final) throw;
      return;
    }
    std::set_difference(members_.begin(), members_.end(), sel.begin(), sel.end(),
                        std::back_inserter(diff.removed));
    std::set_difference(sel.begin(), sel.end(), members_.begin(), members_.end(),
                        std::back_inserter(diff.added));
    members_ = std::move(sel);
  }

  Geometry ct_;
  EstimationOptions opts_;
  EstimationOptions preview_;
  std::size_t every_;
  MotionTrace trace_;
  std::vector<std::size_t> members_;
  ThresholdChoice choice_;
  std::size_t instrument_count_ = 0;
  std::size_t checkpoints_ = 0;
};

}  // namespace

std::unique_ptr<RemovalStream> make_removal_stream(Method method, const Geometry& ct,
                                                   const InstrumentGeometry& geometry,
                                                   const EstimationOptions& opts,
                                                   std::size_t checkpoint_every) {
  ct.validate();
  if (!opts.bandwidth) throw InputError("stream: options must be resolved (bandwidth missing)");
  const double bw = *opts.bandwidth;
  const double shift = 3.0 * opts.noise.sigma;
  if (method == Method::kTrajectory) {
    if (!opts.step) throw InputError("stream: options must be resolved (step missing)");
    return std::make_unique<TrajectoryRemovalStream>(ct, opts, checkpoint_every);
  }
  if (method == Method::kTip) {
    auto s = std::make_unique<DensityRemovalStream>(ct, opts, checkpoint_every, false);
    s->add_part(ResidenceStream(Tool::kInstrument, bw, shift, opts.max_interval,
                                [ct](const MotionSample& m, std::vector<std::size_t>& out) {
                                  if (const auto idx = world_to_index(ct, m.tip)) out.push_back(ct.linear(*idx));
                                }));
    return s;
  }
  if (geometry.segments.empty()) throw InputError("body method: instrument geometry is missing");
  auto s = std::make_unique<DensityRemovalStream>(ct, opts, checkpoint_every, opts.body_any_touch);
  for (Tool tool : {Tool::kInstrument, Tool::kEndoscope}) {
    if (!geometry.has(tool)) continue;
    s->add_part(ResidenceStream(
        tool, bw, shift, opts.max_interval,
        [ct, geometry, tool](const MotionSample& m, std::vector<std::size_t>& out) {
          EndoscopeFrame pose;
          try {
            pose = build_tool_frame(m);
          } catch (const ComputeError&) {
            return;
          }
          const auto v = body_voxels(ct, pose, geometry, tool);
          out.insert(out.end(), v.begin(), v.end());
        }));
  }
  return s;
}

}  // namespace vict
