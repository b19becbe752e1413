#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rembed/dataio.hpp"
#include "rembed/model.hpp"

namespace rembed::harness {

enum class FoldGranularity { Word, Sentence };

struct TrainConfig {
  double lr = 0.05;
  int epochs = 50;
  bool early_stop = true;
  double plateau_rel_change = 1e-5;  // training-loss plateau threshold
  int plateau_window = 5;
  std::uint64_t seed = 0;
  model::LossWeights lambda;
  model::LossOptions loss_options;
  std::set<model::Modality> modalities = {model::Modality::Eye, model::Modality::Eeg};
  bool balance = true;  // downsample the majority class in train and test
  FoldGranularity fold_granularity = FoldGranularity::Word;
  bool mask_zero_fixation = false;
  int folds = 5;
  unsigned bins = 16;
  int jobs = 1;

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_trace;  // mean per-sentence loss per epoch
  int epochs_run = 0;
};

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct FoldMetrics {
  int fold = 0;
  double accuracy = 0.0;
  double auc = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<RocPoint> roc;
  std::vector<double> scores;  // retained for pooled ROC
  std::vector<int> labels;
};

struct SubjectMetrics {
  std::string subject;
  std::vector<FoldMetrics> folds;
  double mean_accuracy = 0.0;
  double auc = 0.0;  // pooled over folds
  std::vector<RocPoint> roc;
};

struct MetricsReport {
  std::vector<SubjectMetrics> subjects;
  double mean_accuracy = 0.0;  // unweighted mean of subject means
  double mean_auc = 0.0;
};

// Loss masks parallel to ds.sentences; entry [s][w] is 1.0 when that word
// participates in the loss / metrics.
using LossMasks = std::vector<std::vector<double>>;

LossMasks build_loss_masks(const dataio::Dataset& ds,
                           const std::vector<dataio::SampleId>& active);

// Masking and per-sentence eye normalization, applied once before training.
dataio::Dataset prepare_dataset(const dataio::Dataset& ds, const TrainConfig& cfg);

// Per-sentence full-batch SGD over the masked words. Deterministic under
// cfg.seed; raises NumericError naming the epoch if the loss turns non-finite.
TrainResult train(model::Model& m, const dataio::Dataset& ds, const LossMasks& masks,
                  const TrainConfig& cfg);

// Threshold-0.5 confusion counts plus retained scores for ROC.
FoldMetrics evaluate(const model::Model& m, const dataio::Dataset& ds,
                     const LossMasks& masks);

// Threshold sweep over distinct scores (ties move simultaneously) and
// trapezoid AUC. Requires both classes present.
std::pair<std::vector<RocPoint>, double> roc_auc(std::span<const double> scores,
                                                 std::span<const int> labels);

using FoldCallback = std::function<void(const std::string& subject, int fold,
                                        const model::Model& m, const TrainResult& tr)>;

// Per-subject k-fold cross-validation: fold assignment, per-partition class
// balancing, fresh model per fold, metrics aggregation. Fold jobs may run on
// cfg.jobs threads; results and callbacks are ordered deterministically.
MetricsReport cross_validate(const dataio::Dataset& ds, const TrainConfig& cfg,
                             const model::ModelConfig& arch,
                             const FoldCallback& on_fold = nullptr);

// Builds the effective per-run model config from the architecture template,
// the enabled modalities and the dataset's feature dimensions.
model::ModelConfig resolve_model_config(const model::ModelConfig& arch,
                                        const std::set<model::Modality>& modalities,
                                        const dataio::Dataset& ds);

// Encoder outputs (pre-MLP) for every valid word: one rank-2 sidecar record
// plus a JSON manifest listing (subject, sentence, word, token, label) rows.
void export_embeddings(const model::Model& m, const dataio::Dataset& ds,
                       const std::filesystem::path& manifest_path);

std::string metrics_to_json(const MetricsReport& report, const std::string& config_echo_json);
std::string roc_csv(const MetricsReport& report);

}  // namespace rembed::harness
