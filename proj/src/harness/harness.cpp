#include "rembed/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <thread>

#include "rembed/features.hpp"
#include "rembed/rng.hpp"
#include "rembed/tensor.hpp"

namespace rembed::harness {

using dataio::Dataset;
using dataio::SampleId;

void TrainConfig::validate() const {
  require(lr > 0.0, "TrainConfig: lr must be positive");
  require(epochs >= 1, "TrainConfig: epochs must be at least 1");
  require(plateau_window >= 1, "TrainConfig: plateau window must be at least 1");
  require(folds >= 2, "TrainConfig: need at least 2 folds");
  require(!modalities.empty(), "TrainConfig: at least one modality must be enabled");
  require(bins >= 2, "TrainConfig: need at least 2 histogram bins");
  require(jobs >= 1, "TrainConfig: jobs must be at least 1");
  lambda.validate();
}

LossMasks build_loss_masks(const Dataset& ds, const std::vector<SampleId>& active) {
  LossMasks masks(ds.sentences.size());
  for (std::size_t s = 0; s < ds.sentences.size(); ++s) {
    masks[s].assign(ds.sentences[s].words.size(), 0.0);
  }
  for (const auto& id : active) {
    const auto* rec = ds.find(id.subject, id.sentence_id);
    require(rec != nullptr, "build_loss_masks: sample references unknown sentence");
    const std::size_t s = static_cast<std::size_t>(rec - ds.sentences.data());
    masks[s][static_cast<std::size_t>(id.word_index)] = 1.0;
  }
  return masks;
}

Dataset prepare_dataset(const Dataset& ds, const TrainConfig& cfg) {
  Dataset out = ds;
  if (cfg.mask_zero_fixation) dataio::apply_zero_fixation_mask(out);
  if (cfg.modalities.contains(model::Modality::Eye)) dataio::normalize_eye_features(out);
  return out;
}

model::ModelConfig resolve_model_config(const model::ModelConfig& arch,
                                        const std::set<model::Modality>& modalities,
                                        const Dataset& ds) {
  model::ModelConfig cfg = arch;
  cfg.modality_dims.clear();
  for (model::Modality m : modalities) {
    std::size_t dim = 0;
    switch (m) {
      case model::Modality::Eye: dim = features::kEyeFeatureCount; break;
      case model::Modality::Eeg: dim = ds.eeg_dim; break;
      case model::Modality::Wemb: dim = ds.wemb_dim; break;
    }
    require(dim > 0, std::string("modality '") + model::modality_name(m) +
                         "' requested but the dataset has no such features");
    cfg.modality_dims[m] = dim;
  }
  return cfg;
}

TrainResult train(model::Model& m, const Dataset& ds, const LossMasks& masks,
                  const TrainConfig& cfg) {
  cfg.validate();
  require(masks.size() == ds.sentences.size(), "train: mask/sentence count mismatch");

  std::vector<std::size_t> active_sentences;
  for (std::size_t s = 0; s < masks.size(); ++s) {
    const double z = std::accumulate(masks[s].begin(), masks[s].end(), 0.0);
    if (z > 0.0) active_sentences.push_back(s);
  }
  require(!active_sentences.empty(), "train: empty training set");

  Rng shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle"));
  numcore::Tape tape;
  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = active_sentences;
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t s : order) {
      tape.clear();
      const auto bp = m.forward_sentence(tape, ds.sentences[s], masks[s]);
      const auto loss = model::total_loss(tape, bp.p, bp.y, bp.mask, cfg.lambda,
                                          cfg.loss_options);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch + 1));
      }
      tape.backward(loss);
      numcore::sgd_step(m.parameters(), cfg.lr);
      loss_sum += lv;
    }
    result.loss_trace.push_back(loss_sum / static_cast<double>(order.size()));
    result.epochs_run = epoch + 1;

    if (cfg.early_stop && epoch >= cfg.plateau_window) {
      const double prev = result.loss_trace[static_cast<std::size_t>(
          epoch - cfg.plateau_window)];
      const double rel = std::abs(result.loss_trace.back() - prev) /
                         std::max(std::abs(prev), 1e-12);
      if (rel < cfg.plateau_rel_change) break;
    }
  }
  tape.clear();
  return result;
}

FoldMetrics evaluate(const model::Model& m, const Dataset& ds, const LossMasks& masks) {
  require(masks.size() == ds.sentences.size(), "evaluate: mask/sentence count mismatch");
  FoldMetrics fm;
  numcore::Tape tape;
  for (std::size_t s = 0; s < ds.sentences.size(); ++s) {
    const double z = std::accumulate(masks[s].begin(), masks[s].end(), 0.0);
    if (z <= 0.0) continue;
    tape.clear();
    const auto bp = m.forward_sentence(tape, ds.sentences[s], masks[s]);
    for (std::size_t w = 0; w < masks[s].size(); ++w) {
      if (masks[s][w] <= 0.0) continue;
      const double score = bp.p.values()[w];
      const int label = bp.y[w] > 0.5 ? 1 : 0;
      fm.scores.push_back(score);
      fm.labels.push_back(label);
      const bool predicted_hrw = score > 0.5;
      if (label == 1) {
        predicted_hrw ? ++fm.tp : ++fm.fn;
      } else {
        predicted_hrw ? ++fm.fp : ++fm.tn;
      }
    }
  }
  tape.clear();
  const long total = fm.tp + fm.fp + fm.tn + fm.fn;
  require(total > 0, "evaluate: empty test set");
  fm.accuracy = static_cast<double>(fm.tp + fm.tn) / static_cast<double>(total);
  return fm;
}

std::pair<std::vector<RocPoint>, double> roc_auc(std::span<const double> scores,
                                                 std::span<const int> labels) {
  require(scores.size() == labels.size(), "roc_auc: scores/labels length mismatch");
  long pos = 0, neg = 0;
  for (int l : labels) (l != 0 ? pos : neg)++;
  require(pos > 0 && neg > 0, "roc_auc: need both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  std::vector<RocPoint> points;
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double auc = 0.0;
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    // all samples tied at this score move together: diagonal segment
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] != 0 ? tp : fp)++;
      ++i;
    }
    const double x = static_cast<double>(fp) / static_cast<double>(neg);
    const double y = static_cast<double>(tp) / static_cast<double>(pos);
    const auto& prev = points.back();
    auc += (x - prev.fpr) * (y + prev.tpr) * 0.5;
    points.push_back({s, x, y});
  }
  return {std::move(points), auc};
}

namespace {

struct FoldJob {
  std::string subject;
  int fold = 0;
  std::vector<SampleId> train_ids;
  std::vector<SampleId> test_ids;
  std::uint64_t model_seed = 0;
  std::uint64_t train_seed = 0;
};

struct FoldOutcome {
  FoldMetrics metrics;
  TrainResult train_result;
  std::unique_ptr<model::Model> trained;
};

}  // namespace

MetricsReport cross_validate(const Dataset& ds, const TrainConfig& cfg,
                             const model::ModelConfig& arch, const FoldCallback& on_fold) {
  cfg.validate();
  const Dataset prepared = prepare_dataset(ds, cfg);
  const model::ModelConfig base_cfg = resolve_model_config(arch, cfg.modalities, prepared);

  std::vector<FoldJob> jobs;
  for (const std::string& subject : prepared.subjects()) {
    auto ids = dataio::valid_sample_ids(prepared, subject);
    const std::uint64_t fold_seed = derive_seed(cfg.seed, subject + "/folds");
    const auto split = cfg.fold_granularity == FoldGranularity::Word
                           ? dataio::kfold_split(ids, cfg.folds, fold_seed)
                           : dataio::kfold_split_sentences(ids, cfg.folds, fold_seed);
    const auto folds = split.folds();
    for (int f = 0; f < cfg.folds; ++f) {
      FoldJob job;
      job.subject = subject;
      job.fold = f;
      job.test_ids = folds[static_cast<std::size_t>(f)];
      for (int g = 0; g < cfg.folds; ++g) {
        if (g == f) continue;
        const auto& other = folds[static_cast<std::size_t>(g)];
        job.train_ids.insert(job.train_ids.end(), other.begin(), other.end());
      }
      if (cfg.balance) {
        job.train_ids = dataio::downsample_balance(
            prepared, std::move(job.train_ids),
            derive_seed(cfg.seed, subject + "/balance-train", static_cast<std::uint64_t>(f)));
        job.test_ids = dataio::downsample_balance(
            prepared, std::move(job.test_ids),
            derive_seed(cfg.seed, subject + "/balance-test", static_cast<std::uint64_t>(f)));
      }
      job.model_seed = derive_seed(cfg.seed, subject + "/model", static_cast<std::uint64_t>(f));
      job.train_seed = derive_seed(cfg.seed, subject + "/train", static_cast<std::uint64_t>(f));
      jobs.push_back(std::move(job));
    }
  }

  std::vector<FoldOutcome> outcomes(jobs.size());
  auto run_job = [&](std::size_t j) {
    const FoldJob& job = jobs[j];
    model::ModelConfig mcfg = base_cfg;
    mcfg.seed = job.model_seed;
    auto m = std::make_unique<model::Model>(mcfg);

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = job.train_seed;
    const auto train_masks = build_loss_masks(prepared, job.train_ids);
    outcomes[j].train_result = train(*m, prepared, train_masks, fold_cfg);

    const auto test_masks = build_loss_masks(prepared, job.test_ids);
    outcomes[j].metrics = evaluate(*m, prepared, test_masks);
    outcomes[j].metrics.fold = job.fold;
    auto [roc, auc] = roc_auc(outcomes[j].metrics.scores, outcomes[j].metrics.labels);
    outcomes[j].metrics.roc = std::move(roc);
    outcomes[j].metrics.auc = auc;
    outcomes[j].trained = std::move(m);
  };

  if (cfg.jobs <= 1 || jobs.size() <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t j = next.fetch_add(1);
        if (j >= jobs.size()) return;
        try {
          run_job(j);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs),
                                                        jobs.size());
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  MetricsReport report;
  std::size_t j = 0;
  while (j < jobs.size()) {
    SubjectMetrics sm;
    sm.subject = jobs[j].subject;
    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;
    double acc_sum = 0.0;
    while (j < jobs.size() && jobs[j].subject == sm.subject) {
      if (on_fold) {
        on_fold(jobs[j].subject, jobs[j].fold, *outcomes[j].trained,
                outcomes[j].train_result);
      }
      auto& fm = outcomes[j].metrics;
      acc_sum += fm.accuracy;
      pooled_scores.insert(pooled_scores.end(), fm.scores.begin(), fm.scores.end());
      pooled_labels.insert(pooled_labels.end(), fm.labels.begin(), fm.labels.end());
      sm.folds.push_back(std::move(fm));
      ++j;
    }
    sm.mean_accuracy = acc_sum / static_cast<double>(sm.folds.size());
    auto [roc, auc] = roc_auc(pooled_scores, pooled_labels);
    sm.roc = std::move(roc);
    sm.auc = auc;
    report.subjects.push_back(std::move(sm));
  }

  double acc = 0.0, auc = 0.0;
  for (const auto& sm : report.subjects) {
    acc += sm.mean_accuracy;
    auc += sm.auc;
  }
  const double n = static_cast<double>(report.subjects.size());
  report.mean_accuracy = acc / n;
  report.mean_auc = auc / n;
  return report;
}

}  // namespace rembed::harness
