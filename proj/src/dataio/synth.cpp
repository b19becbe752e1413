#include <algorithm>
#include <cmath>

#include "rembed/dataio.hpp"
#include "rembed/features.hpp"
#include "rembed/rng.hpp"

namespace rembed::dataio {

namespace {

// Eye features carry a positive baseline so the nonnegativity invariant
// holds; the shift is identical for both classes.
constexpr double kEyeBaseline = 5.0;

std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
  std::vector<double> e(dim);
  double norm_sq = 0.0;
  for (auto& v : e) {
    v = rng.gaussian();
    norm_sq += v * v;
  }
  if (norm_sq == 0.0) {
    e[0] = 1.0;
    return e;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (auto& v : e) v *= inv;
  return e;
}

}  // namespace

void SynthSpec::validate() const {
  require(n_sentences > 0, "SynthSpec: n_sentences must be positive");
  require(words_per_sentence > 0, "SynthSpec: words_per_sentence must be positive");
  require(delta >= 0.0, "SynthSpec: delta must be nonnegative");
  require(!subject.empty(), "SynthSpec: subject must be non-empty");
}

Dataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synth"));

  const auto e_eye = unit_direction(rng, features::kEyeFeatureCount);
  const auto e_eeg = spec.eeg_dim > 0 ? unit_direction(rng, spec.eeg_dim)
                                      : std::vector<double>{};
  const auto e_wemb = spec.wemb_dim > 0 ? unit_direction(rng, spec.wemb_dim)
                                        : std::vector<double>{};

  Dataset ds;
  ds.max_words = static_cast<std::size_t>(spec.words_per_sentence);
  ds.eeg_dim = spec.eeg_dim;
  ds.wemb_dim = spec.wemb_dim;

  const int w = spec.words_per_sentence;
  for (int s = 0; s < spec.n_sentences; ++s) {
    SentenceRecord rec;
    rec.subject = spec.subject;
    rec.sentence_id = s;

    // Balanced within one per sentence; for odd lengths the extra HRW
    // alternates between sentences so the corpus stays balanced too.
    const int n_hrw = (w % 2 == 0) ? w / 2 : (w + (s % 2)) / 2;
    std::vector<Label> labels(static_cast<std::size_t>(w), Label::LRW);
    std::fill(labels.begin(), labels.begin() + n_hrw, Label::HRW);
    rng.shuffle(labels);

    rec.words.resize(static_cast<std::size_t>(w));
    rec.mask.assign(static_cast<std::size_t>(w), 1);
    for (int i = 0; i < w; ++i) {
      WordSample& ws = rec.words[static_cast<std::size_t>(i)];
      ws.subject = spec.subject;
      ws.sentence_id = s;
      ws.word_index = i;
      ws.token = "w" + std::to_string(s) + "_" + std::to_string(i);
      ws.label = labels[static_cast<std::size_t>(i)];
      ws.valid = true;
      const double sign = ws.label == Label::HRW ? 1.0 : -1.0;
      const double half = sign * spec.delta * 0.5;

      ws.eye.resize(features::kEyeFeatureCount);
      for (std::size_t j = 0; j < features::kEyeFeatureCount; ++j) {
        ws.eye[j] = std::max(0.0, kEyeBaseline + half * e_eye[j] + rng.gaussian());
      }
      ws.eeg.resize(spec.eeg_dim);
      for (std::size_t j = 0; j < spec.eeg_dim; ++j) {
        ws.eeg[j] = half * e_eeg[j] + rng.gaussian();
      }
      if (spec.wemb_dim > 0) {
        ws.wemb.resize(spec.wemb_dim);
        for (std::size_t j = 0; j < spec.wemb_dim; ++j) {
          ws.wemb[j] = half * e_wemb[j] + rng.gaussian();
        }
      }
    }
    ds.sentences.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace rembed::dataio
