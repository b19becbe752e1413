#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rembed/dataio.hpp"
#include "rembed/tensor.hpp"

namespace rembed::model {

enum class Modality { Eye, Eeg, Wemb };

const char* modality_name(Modality m);
Modality parse_modality(const std::string& s);

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 256;
  std::vector<std::size_t> mlp_hidden = {64};
  bool use_layer_norm = true;
  bool use_residual = true;
  double layer_norm_eps = 1e-5;
  std::map<Modality, std::size_t> modality_dims;  // enabled modalities with input dims
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossWeights {
  double bce = 1.0;
  double mse = 1.0;
  double f1 = 1.0;

  void validate() const;  // nonnegative, at least one positive
};

struct LossOptions {
  bool literal_n = false;   // normalize by N instead of sum(mask)
  bool standard_f1 = false; // doubled numerator (conventional F1)
};

// Per-word predictions for one sentence. Masked entries carry no gradient
// and no metric weight.
struct BatchPrediction {
  numcore::Tensor p;            // [M x 1], strictly inside (0, 1)
  numcore::Tensor encoder_out;  // [M x d_model], pre-MLP
  std::vector<double> y;        // 1 = HRW, 0 = LRW
  std::vector<double> mask;     // loss indicator per word
};

// x [M x D_mod] through the modality's affine map into the shared space.
numcore::Tensor project_modality(numcore::Tape& tape, const numcore::Tensor& x,
                                 const numcore::Tensor& weights,
                                 const numcore::Tensor& bias);

// Element-wise additive fusion of two projected modalities.
numcore::Tensor fuse(numcore::Tape& tape, const numcore::Tensor& a,
                     const numcore::Tensor& b);

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same argument).
numcore::Tensor positional_encoding(std::size_t positions, std::size_t d_model);

// Masked losses. p and y hold one entry per word; mask is the indicator.
// The default normalizer is sum(mask); literal_n divides by the entry count
// instead. Zero effective normalizer is a contract error.
numcore::Tensor loss_bce(numcore::Tape& tape, const numcore::Tensor& p,
                         std::span<const double> y, std::span<const double> mask,
                         bool literal_n = false);
numcore::Tensor loss_mse(numcore::Tape& tape, const numcore::Tensor& p,
                         std::span<const double> y, std::span<const double> mask,
                         bool literal_n = false);
// 1 - sum(mask*y*p) / (sum(mask*y) + sum(mask*p)); the denominator is floored
// at 1e-8 when it would vanish. standard_f1 doubles the numerator.
numcore::Tensor loss_softf1(numcore::Tape& tape, const numcore::Tensor& p,
                            std::span<const double> y, std::span<const double> mask,
                            bool standard_f1 = false);
numcore::Tensor total_loss(numcore::Tape& tape, const numcore::Tensor& p,
                           std::span<const double> y, std::span<const double> mask,
                           const LossWeights& lambda, const LossOptions& opts = {});

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  std::vector<numcore::Tensor>& parameters() { return params_; }
  const std::vector<numcore::Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  numcore::Tensor& parameter(const std::string& name);

  // project -> fuse -> positional encoding -> encoder block -> MLP head.
  // loss_mask may be empty, in which case the validity mask is used.
  BatchPrediction forward_sentence(numcore::Tape& tape,
                                   const dataio::SentenceRecord& rec,
                                   std::span<const double> loss_mask = {}) const;

  // Multi-head self-attention over valid positions plus feed-forward,
  // with residual/layer-norm per config.
  numcore::Tensor encoder_block(numcore::Tape& tape, const numcore::Tensor& x,
                                std::span<const std::uint8_t> valid) const;

  numcore::Tensor mlp_head(numcore::Tape& tape, const numcore::Tensor& x) const;

 private:
  ModelConfig cfg_;
  std::vector<numcore::Tensor> params_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;

  numcore::Tensor& add_param(const std::string& name, numcore::Tensor t);
  const numcore::Tensor& get(const std::string& name) const;
};

// Checkpoint: JSON header next to a binary sidecar holding the parameter
// matrices; the header records an FNV-1a checksum of the sidecar bytes.
void save_checkpoint(const Model& model, const LossWeights& lambda,
                     const std::filesystem::path& json_path);
Model load_checkpoint(const std::filesystem::path& json_path,
                      LossWeights* lambda_out = nullptr);

}  // namespace rembed::model
