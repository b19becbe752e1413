#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rembed/error.hpp"

namespace rembed::dataio {

enum class Label : std::uint8_t { LRW = 0, HRW = 1 };

const char* label_name(Label l);
Label parse_label(const std::string& s);

// One word/token occurrence. Feature vectors are zero-filled for padding
// slots and for words without fixations.
struct WordSample {
  std::string subject;
  int sentence_id = 0;
  int word_index = 0;
  std::string token;
  Label label = Label::LRW;
  bool valid = false;
  bool is_padding = false;  // synthesized slot, never serialized
  std::vector<double> eye;
  std::vector<double> eeg;
  std::vector<double> wemb;  // empty when the modality is absent

  bool operator==(const WordSample&) const = default;
};

// Ordered word slots for one sentence, padded to the corpus maximum M.
// mask[i] mirrors words[i].valid.
struct SentenceRecord {
  std::string subject;
  int sentence_id = 0;
  std::vector<WordSample> words;
  std::vector<std::uint8_t> mask;

  std::size_t valid_count() const;
  bool operator==(const SentenceRecord&) const = default;
};

struct Dataset {
  std::vector<SentenceRecord> sentences;  // sorted by (subject, sentence_id)
  std::size_t max_words = 0;              // M
  std::size_t eeg_dim = 0;
  std::size_t wemb_dim = 0;               // 0 = modality absent
  unsigned eeg_channels = 0;              // 0 = unknown / not applicable
  unsigned eeg_bins = 0;

  const SentenceRecord* find(const std::string& subject, int sentence_id) const;
  std::vector<std::string> subjects() const;
  std::size_t valid_samples() const;

  bool operator==(const Dataset&) const = default;
};

struct SampleId {
  std::string subject;
  int sentence_id = 0;
  int word_index = 0;
  auto operator<=>(const SampleId&) const = default;
};

const WordSample& sample_at(const Dataset& ds, const SampleId& id);

// All valid samples in canonical (subject, sentence, word) order.
std::vector<SampleId> valid_sample_ids(const Dataset& ds);
std::vector<SampleId> valid_sample_ids(const Dataset& ds, const std::string& subject);

// Keeps the minority class whole and a seeded uniform subset of the majority
// class of equal size. Requires at least one HRW sample.
std::vector<SampleId> downsample_balance(const Dataset& ds, std::vector<SampleId> ids,
                                         std::uint64_t seed);

struct FoldSplit {
  int fold_count = 0;
  std::map<SampleId, int> assignments;

  std::vector<std::vector<SampleId>> folds() const;
};

// Seeded shuffle then contiguous partition; fold sizes differ by at most one.
// Assignments depend only on (sample ids, k, seed), not on input order.
FoldSplit kfold_split(std::vector<SampleId> ids, int k, std::uint64_t seed);

// Sentence-granular variant: all words of a sentence share a fold.
FoldSplit kfold_split_sentences(std::vector<SampleId> ids, int k, std::uint64_t seed);

struct LoadOptions {
  unsigned bins = 16;  // histogram bins for raw-EEG conversion at load time
};

struct SaveOptions {
  bool eeg_inline = false;  // default: EEG vectors go to the binary sidecar
};

// JSONL (one WordSample per line) with optional binary sidecar at the same
// path with extension ".bin". Raw per-word EEG matrices (rank-2 C x T, or
// rank-3 fixations x C x T) are converted to conditional-entropy vectors
// while loading.
Dataset load_samples(const std::filesystem::path& jsonl_path, const LoadOptions& opts = {});
void save_dataset(const Dataset& ds, const std::filesystem::path& jsonl_path,
                  const SaveOptions& opts = {});

std::filesystem::path sidecar_path_for(const std::filesystem::path& jsonl_path);

// Marks words whose feature vectors are all zero as invalid.
void apply_zero_fixation_mask(Dataset& ds);

// Per-sentence L1 normalization of each of the 12 eye-gaze feature columns.
void normalize_eye_features(Dataset& ds);

struct SynthSpec {
  int n_sentences = 0;
  int words_per_sentence = 0;
  double delta = 0.0;  // class separation in units of cluster stddev
  std::size_t eeg_dim = 5460;
  std::size_t wemb_dim = 0;
  std::uint64_t seed = 0;
  std::string subject = "synthetic";

  void validate() const;
};

// Two Gaussian clusters per modality at +/- delta/2 along a random unit
// direction, unit isotropic noise, labels balanced within one per sentence.
Dataset synth_generate(const SynthSpec& spec);

}  // namespace rembed::dataio
