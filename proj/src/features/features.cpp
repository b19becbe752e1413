#include "rembed/features.hpp"

#include <algorithm>
#include <cmath>

#include "rembed/kernels.hpp"

namespace rembed::features {

namespace {

// Per-series equal-width bin indices over the series' own [min, max].
std::vector<std::uint32_t> bin_series(std::span<const double> x, unsigned bins) {
  const auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *mn_it, hi = *mx_it;
  std::vector<std::uint32_t> idx(x.size(), 0);
  if (hi > lo) {
    const double inv_width = static_cast<double>(bins) / (hi - lo);
    kernels::active().bin_index(x.data(), x.size(), lo, inv_width, bins, idx.data());
  }
  return idx;
}

// Shannon entropy in bits of a histogram with total count n.
double entropy_bits(std::span<const std::uint32_t> counts, std::size_t n) {
  double acc = 0.0;
  for (std::uint32_t c : counts) {
    if (c > 0) acc += static_cast<double>(c) * std::log2(static_cast<double>(c));
  }
  const double dn = static_cast<double>(n);
  return std::log2(dn) - acc / dn;
}

double ce_from_indices(std::span<const std::uint32_t> ix, std::span<const std::uint32_t> iy,
                       unsigned bins) {
  std::vector<std::uint32_t> joint(static_cast<std::size_t>(bins) * bins, 0);
  std::vector<std::uint32_t> marg_y(bins, 0);
  for (std::size_t t = 0; t < ix.size(); ++t) {
    ++joint[ix[t] * bins + iy[t]];
    ++marg_y[iy[t]];
  }
  const double h_xy = entropy_bits(joint, ix.size());
  const double h_y = entropy_bits(marg_y, ix.size());
  const double ce = h_xy - h_y;
  return std::clamp(ce, 0.0, std::log2(static_cast<double>(bins)));
}

}  // namespace

std::array<double, kEyeFeatureCount> EyeGazeFeatures::to_array() const {
  return {n_fixations, mean_pupil_size, ffd,       trt,       gd,       gpt,
          sfd,         pupil_ffd,       pupil_trt, pupil_gd,  pupil_gpt, pupil_sfd};
}

EyeGazeFeatures EyeGazeFeatures::from_span(std::span<const double> v) {
  require(v.size() == kEyeFeatureCount,
          "EyeGazeFeatures: expected " + std::to_string(kEyeFeatureCount) +
              " components, got " + std::to_string(v.size()));
  EyeGazeFeatures f;
  f.n_fixations = v[0];
  f.mean_pupil_size = v[1];
  f.ffd = v[2];
  f.trt = v[3];
  f.gd = v[4];
  f.gpt = v[5];
  f.sfd = v[6];
  f.pupil_ffd = v[7];
  f.pupil_trt = v[8];
  f.pupil_gd = v[9];
  f.pupil_gpt = v[10];
  f.pupil_sfd = v[11];
  f.validate();
  return f;
}

void EyeGazeFeatures::validate() const {
  for (double v : to_array()) {
    require(v >= 0.0, "EyeGazeFeatures: negative component");
  }
}

void EEGEpoch::validate() const {
  require(channel_count >= 2, "EEGEpoch: need at least 2 channels");
  require(sample_count >= 2, "EEGEpoch: need at least 2 samples");
  require(samples.size() == channel_count * sample_count,
          "EEGEpoch: sample buffer does not match channel_count x sample_count");
}

double conditional_entropy(std::span<const double> x, std::span<const double> y,
                           unsigned bins) {
  require(x.size() == y.size(), "conditional_entropy: series lengths differ (" +
                                    std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()) + ")");
  require(x.size() >= 2, "conditional_entropy: need at least 2 samples");
  require(bins >= 2, "conditional_entropy: need at least 2 bins");
  const auto ix = bin_series(x, bins);
  const auto iy = bin_series(y, bins);
  return ce_from_indices(ix, iy, bins);
}

double series_entropy(std::span<const double> x, unsigned bins) {
  require(x.size() >= 2, "series_entropy: need at least 2 samples");
  require(bins >= 2, "series_entropy: need at least 2 bins");
  const auto ix = bin_series(x, bins);
  std::vector<std::uint32_t> counts(bins, 0);
  for (std::uint32_t i : ix) ++counts[i];
  return entropy_bits(counts, x.size());
}

CEFeatureVector ce_feature_vector(const EEGEpoch& epoch, unsigned bins) {
  epoch.validate();
  require(bins >= 2, "ce_feature_vector: need at least 2 bins");
  const std::size_t c = epoch.channel_count;

  // Bin every channel once; the pair loop then only fills histograms.
  std::vector<std::vector<std::uint32_t>> indices(c);
  for (std::size_t i = 0; i < c; ++i) {
    indices[i] = bin_series(epoch.channel(i), bins);
  }

  CEFeatureVector out;
  out.source_channels = c;
  out.values.reserve(ce_vector_length(c));
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i + 1; j < c; ++j) {
      out.values.push_back(ce_from_indices(indices[i], indices[j], bins));
    }
  }
  return out;
}

std::vector<double> l1_normalize_per_sentence(std::span<const double> column) {
  for (double v : column) {
    require(v >= 0.0, "l1_normalize_per_sentence: negative entry");
  }
  std::vector<double> out(column.begin(), column.end());
  const double s = kernels::active().sum(out.data(), out.size());
  if (s > 0.0) {
    kernels::active().scale(out.data(), 1.0 / s, out.data(), out.size());
  }
  return out;
}

std::vector<double> aggregate_fixations(const std::vector<std::vector<double>>& vectors,
                                        std::size_t dim) {
  std::vector<double> acc(dim, 0.0);
  for (const auto& v : vectors) {
    require(v.size() == dim, "aggregate_fixations: vector length " +
                                 std::to_string(v.size()) + " does not match " +
                                 std::to_string(dim));
    const double norm = std::sqrt(kernels::active().dot(v.data(), v.data(), v.size()));
    if (norm > 0.0) {
      kernels::active().axpy(1.0 / norm, v.data(), acc.data(), dim);
    }
  }
  return acc;
}

WordBiomarkers make_word_biomarkers(const std::vector<std::vector<double>>& eye_per_fixation,
                                    const std::vector<std::vector<double>>& eeg_per_fixation,
                                    std::size_t eeg_dim) {
  require(eye_per_fixation.size() == eeg_per_fixation.size() || eye_per_fixation.empty() ||
              eeg_per_fixation.empty(),
          "make_word_biomarkers: per-fixation lists must agree when both present");
  WordBiomarkers w;
  w.fixation_count = std::max(eye_per_fixation.size(), eeg_per_fixation.size());
  const auto eye = aggregate_fixations(eye_per_fixation, kEyeFeatureCount);
  std::copy(eye.begin(), eye.end(), w.eye.begin());
  w.eeg = aggregate_fixations(eeg_per_fixation, eeg_dim);
  return w;
}

}  // namespace rembed::features
