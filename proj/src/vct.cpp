#include "vict/vct.hpp"

#include <algorithm>
#include <climits>

#include "vict/simd/kernels.hpp"

namespace vict {

VirtualCT synthesize(const HuVolume& preop, const MaskVolume& mask) {
  require_same_geometry(preop.geometry(), mask.geometry(), "synthesize: preop vs mask");
  validate_mask(mask);
  const auto& k = simd::active_kernels();
  VirtualCT out{preop, mask, std::nullopt, 0};
  const std::int32_t mn = k.masked_min_i16(preop.data().data(), mask.data().data(), preop.size());
  if (mn == INT32_MAX) return out;
  out.replacement = static_cast<std::int16_t>(mn);
  k.select_i16(preop.data().data(), mask.data().data(), *out.replacement, out.volume.data().data(),
               preop.size());
  return out;
}

std::int16_t VctSnapshot::at(std::size_t linear) const {
  const std::size_t len = slices_.empty() ? 1 : slices_.front()->size();
  return (*slices_[linear / len])[linear % len];
}

HuVolume VctSnapshot::materialize() const {
  std::vector<std::int16_t> data;
  data.reserve(geometry_.voxel_count());
  for (const auto& s : slices_) data.insert(data.end(), s->begin(), s->end());
  return HuVolume(geometry_, std::move(data));
}

VctSession::VctSession(HuVolume preop, Method method, const InstrumentGeometry& geometry,
                       const EstimationOptions& resolved, std::size_t checkpoint_every)
    : preop_(std::move(preop)),
      stream_(make_removal_stream(method, preop_.geometry(), geometry, resolved, checkpoint_every)),
      slice_len_(static_cast<std::size_t>(preop_.geometry().dims[0]) * preop_.geometry().dims[1]),
      mask_(preop_.geometry(), 0) {
  const auto src = preop_.data();
  for (int z = 0; z < preop_.geometry().dims[2]; ++z) {
    const auto first = src.begin() + static_cast<std::ptrdiff_t>(z * slice_len_);
    slices_.push_back(std::make_shared<VctSnapshot::Slice>(first, first + static_cast<std::ptrdiff_t>(slice_len_)));
  }
  publish();
}

void VctSession::write(std::size_t v, std::int16_t value) {
  auto& slice = slices_[v / slice_len_];
  if (slice.use_count() > 1) slice = std::make_shared<VctSnapshot::Slice>(*slice);
  (*slice)[v % slice_len_] = value;
}

void VctSession::add_member(std::size_t v) {
  member_pos_.emplace(v, members_.size());
  members_.push_back(v);
}

void VctSession::remove_member(std::size_t v) {
  const auto it = member_pos_.find(v);
  const std::size_t pos = it->second;
  member_pos_.erase(it);
  if (pos + 1 != members_.size()) {
    members_[pos] = members_.back();
    member_pos_[members_[pos]] = pos;
  }
  members_.pop_back();
}

void VctSession::apply(const MaskDiff& diff) {
  if (diff.empty()) return;
  std::int32_t added_min = INT32_MAX;
  for (auto v : diff.added) {
    if (mask_[v]) continue;
    mask_[v] = 1;
    add_member(v);
    added_min = std::min<std::int32_t>(added_min, preop_[v]);
  }
  bool rescan = false;
  for (auto v : diff.removed) {
    if (!mask_[v]) continue;
    mask_[v] = 0;
    remove_member(v);
    write(v, preop_[v]);
    rescan = rescan || (replacement_ && preop_[v] == *replacement_);
  }
  if (members_.empty()) {
    replacement_.reset();
    return;
  }
  std::int32_t mn = INT32_MAX;
  if (rescan || !replacement_) {
    for (auto v : members_) mn = std::min<std::int32_t>(mn, preop_[v]);
  } else {
    mn = std::min<std::int32_t>(*replacement_, added_min);
  }
  const auto value = static_cast<std::int16_t>(mn);
  if (replacement_ && *replacement_ == value) {
    for (auto v : diff.added) {
      if (mask_[v]) write(v, value);
    }
  } else {
    for (auto v : members_) write(v, value);
    replacement_ = value;
  }
}

void VctSession::publish() {
  std::vector<std::shared_ptr<const VctSnapshot::Slice>> view(slices_.begin(), slices_.end());
  VctSnapshot snap(preop_.geometry(), std::move(view), replacement_, revision_, members_.size());
  std::lock_guard lock(published_mutex_);
  published_ = std::move(snap);
}

std::uint64_t VctSession::update(std::span<const MotionSample> samples) {
  if (samples.empty()) return revision_;
  for (const auto& s : samples) {
    diff_.clear();
    stream_->push(s, diff_);
    apply(diff_);
  }
  ++revision_;
  publish();
  return revision_;
}

std::uint64_t VctSession::finish() {
  diff_.clear();
  stream_->finish(diff_);
  apply(diff_);
  ++revision_;
  publish();
  return revision_;
}

VctSnapshot VctSession::snapshot() const {
  std::lock_guard lock(published_mutex_);
  return published_;
}

VirtualCT VctSession::current() const {
  return {snapshot().materialize(), mask_, replacement_, revision_};
}

std::uint64_t update_incremental(VctSession& session, std::span<const MotionSample> samples) {
  return session.update(samples);
}

}  // namespace vict
