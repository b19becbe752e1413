#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "rembed/error.hpp"

namespace rembed::features {

inline constexpr std::size_t kEyeFeatureCount = 12;
inline constexpr unsigned kDefaultEntropyBins = 16;

// The 12 per-word eye-gaze features, fixed order. Durations are in
// milliseconds, pupil sizes in recorder units, the fixation count is
// dimensionless. All components are nonnegative.
struct EyeGazeFeatures {
  double n_fixations = 0;
  double mean_pupil_size = 0;
  double ffd = 0;  // first fixation duration
  double trt = 0;  // total reading time
  double gd = 0;   // gaze duration
  double gpt = 0;  // go-past time
  double sfd = 0;  // single fixation duration
  double pupil_ffd = 0;
  double pupil_trt = 0;
  double pupil_gd = 0;
  double pupil_gpt = 0;
  double pupil_sfd = 0;

  std::array<double, kEyeFeatureCount> to_array() const;
  static EyeGazeFeatures from_span(std::span<const double> v);
  void validate() const;  // contract error on negative components
};

// One word-level EEG segment: C channels by T samples, row-major, microvolts.
struct EEGEpoch {
  std::size_t channel_count = 0;
  std::size_t sample_count = 0;
  std::vector<double> samples;  // channel_count x sample_count

  std::span<const double> channel(std::size_t c) const {
    return {samples.data() + c * sample_count, sample_count};
  }
  void validate() const;  // C >= 2, T >= 2, size consistency
};

// Flattened upper triangle of the pairwise conditional-entropy matrix,
// H(X_i | X_j) for i < j in row-major order; C*(C-1)/2 entries in bits.
struct CEFeatureVector {
  std::vector<double> values;
  std::size_t source_channels = 0;
};

// H(X|Y) = H(X,Y) - H(Y) in bits, from the empirical joint histogram with
// `bins` equal-width bins spanning each series' own [min, max]. A constant
// series occupies a single bin. Result is clamped into [0, log2(bins)].
double conditional_entropy(std::span<const double> x, std::span<const double> y,
                           unsigned bins);

// Empirical entropy of one series under the same binning rule, in bits.
double series_entropy(std::span<const double> x, unsigned bins);

CEFeatureVector ce_feature_vector(const EEGEpoch& epoch, unsigned bins);

inline std::size_t ce_vector_length(std::size_t channels) {
  return channels * (channels - 1) / 2;
}

// Divides a nonnegative per-sentence feature column by its sum; an all-zero
// column is returned unchanged.
std::vector<double> l1_normalize_per_sentence(std::span<const double> column);

// Scales every vector to unit L2 norm (all-zero vectors stay zero) and sums
// them element-wise. An empty list yields a zero vector of length `dim`.
std::vector<double> aggregate_fixations(const std::vector<std::vector<double>>& vectors,
                                        std::size_t dim);

// Per-word biomarkers after multi-fixation aggregation. A word with no
// fixations carries all-zero vectors.
struct WordBiomarkers {
  std::array<double, kEyeFeatureCount> eye{};
  std::vector<double> eeg;
  std::size_t fixation_count = 0;
};

WordBiomarkers make_word_biomarkers(const std::vector<std::vector<double>>& eye_per_fixation,
                                    const std::vector<std::vector<double>>& eeg_per_fixation,
                                    std::size_t eeg_dim);

}  // namespace rembed::features
