#include "rembed/model.hpp"

#include <algorithm>
#include <cmath>

#include "rembed/features.hpp"
#include "rembed/rng.hpp"

namespace rembed::model {

using numcore::Shape;
using numcore::Tape;
using numcore::Tensor;

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Eye: return "eye";
    case Modality::Eeg: return "eeg";
    case Modality::Wemb: return "wemb";
  }
  return "?";
}

Modality parse_modality(const std::string& s) {
  if (s == "eye") return Modality::Eye;
  if (s == "eeg") return Modality::Eeg;
  if (s == "wemb") return Modality::Wemb;
  throw ContractError("unknown modality '" + s + "' (expected eye, eeg or wemb)");
}

void ModelConfig::validate() const {
  require(d_model > 0 && d_model % 2 == 0, "ModelConfig: d_model must be positive and even");
  require(n_heads > 0, "ModelConfig: n_heads must be positive");
  require(d_model % n_heads == 0, "ModelConfig: d_model must be divisible by n_heads");
  require(ffn_dim > 0, "ModelConfig: ffn_dim must be positive");
  for (std::size_t h : mlp_hidden) require(h > 0, "ModelConfig: mlp hidden dims must be positive");
  require(!modality_dims.empty(), "ModelConfig: at least one modality must be enabled");
  for (const auto& [m, d] : modality_dims) {
    require(d > 0, std::string("ModelConfig: modality '") + modality_name(m) +
                       "' needs a positive input dim");
  }
  require(layer_norm_eps > 0.0, "ModelConfig: layer_norm_eps must be positive");
}

void LossWeights::validate() const {
  require(bce >= 0.0 && mse >= 0.0 && f1 >= 0.0, "LossWeights: weights must be nonnegative");
  require(bce > 0.0 || mse > 0.0 || f1 > 0.0, "LossWeights: at least one weight must be positive");
}

Tensor project_modality(Tape& tape, const Tensor& x, const Tensor& weights,
                        const Tensor& bias) {
  if (x.cols() != weights.rows()) {
    throw ContractError("project_modality: input dim " + std::to_string(x.cols()) +
                        " does not match projection rows " + std::to_string(weights.rows()));
  }
  return tape.add_rowvec(tape.matmul(x, weights), bias);
}

Tensor fuse(Tape& tape, const Tensor& a, const Tensor& b) { return tape.add(a, b); }

Tensor positional_encoding(std::size_t positions, std::size_t d_model) {
  require(d_model % 2 == 0, "positional_encoding: d_model must be even");
  require(positions > 0, "positional_encoding: need at least one position");
  Tensor pe = Tensor::zeros({positions, d_model});
  auto& v = pe.values();
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double freq =
          std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) / freq;
      v[pos * d_model + 2 * i] = std::sin(angle);
      v[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

namespace {

double masked_normalizer(std::span<const double> mask, bool literal_n, const char* op) {
  double z;
  if (literal_n) {
    z = static_cast<double>(mask.size());
  } else {
    z = 0.0;
    for (double m : mask) z += m;
  }
  require(z > 0.0, std::string(op) + ": zero effective normalizer (empty mask)");
  return z;
}

void check_loss_args(const Tensor& p, std::span<const double> y, std::span<const double> mask,
                     const char* op) {
  require(p.size() == y.size() && p.size() == mask.size(),
          std::string(op) + ": p, y and mask must have equal lengths");
  require(p.size() > 0, std::string(op) + ": empty prediction");
}

}  // namespace

Tensor loss_bce(Tape& tape, const Tensor& p, std::span<const double> y,
                std::span<const double> mask, bool literal_n) {
  check_loss_args(p, y, mask, "loss_bce");
  const double z = masked_normalizer(mask, literal_n, "loss_bce");

  const Tensor yt = Tensor::from(p.shape(), {y.begin(), y.end()});
  const Tensor mt = Tensor::from(p.shape(), {mask.begin(), mask.end()});
  std::vector<double> inv_y(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) inv_y[i] = 1.0 - y[i];
  const Tensor yt_inv = Tensor::from(p.shape(), std::move(inv_y));
  const Tensor ones = Tensor::from(p.shape(), std::vector<double>(p.size(), 1.0));

  const Tensor pc = tape.clamp(p, 1e-7, 1.0 - 1e-7);
  const Tensor term = tape.add(tape.mul(yt, tape.log(pc)),
                               tape.mul(yt_inv, tape.log(tape.sub(ones, pc))));
  return tape.scale(tape.sum_all(tape.mul(mt, term)), -1.0 / z);
}

Tensor loss_mse(Tape& tape, const Tensor& p, std::span<const double> y,
                std::span<const double> mask, bool literal_n) {
  check_loss_args(p, y, mask, "loss_mse");
  const double z = masked_normalizer(mask, literal_n, "loss_mse");

  const Tensor yt = Tensor::from(p.shape(), {y.begin(), y.end()});
  const Tensor mt = Tensor::from(p.shape(), {mask.begin(), mask.end()});
  const Tensor diff = tape.sub(yt, p);
  return tape.scale(tape.sum_all(tape.mul(mt, tape.mul(diff, diff))), 1.0 / z);
}

Tensor loss_softf1(Tape& tape, const Tensor& p, std::span<const double> y,
                   std::span<const double> mask, bool standard_f1) {
  check_loss_args(p, y, mask, "loss_softf1");

  const Tensor mt = Tensor::from(p.shape(), {mask.begin(), mask.end()});
  std::vector<double> my(y.size());
  double sum_my = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my[i] = mask[i] * y[i];
    sum_my += my[i];
  }
  const Tensor myt = Tensor::from(p.shape(), std::move(my));

  Tensor num = tape.sum_all(tape.mul(myt, p));
  if (standard_f1) num = tape.scale(num, 2.0);
  // Denominator floored only when it would vanish, so exact inputs stay exact.
  const Tensor denom =
      tape.clamp_min(tape.add_scalar(tape.sum_all(tape.mul(mt, p)), sum_my), 1e-8);
  return tape.sub(Tensor::scalar(1.0), tape.div(num, denom));
}

Tensor total_loss(Tape& tape, const Tensor& p, std::span<const double> y,
                  std::span<const double> mask, const LossWeights& lambda,
                  const LossOptions& opts) {
  lambda.validate();
  const Tensor bce = loss_bce(tape, p, y, mask, opts.literal_n);
  const Tensor mse = loss_mse(tape, p, y, mask, opts.literal_n);
  const Tensor f1 = loss_softf1(tape, p, y, mask, opts.standard_f1);
  return tape.add(tape.add(tape.scale(bce, lambda.bce), tape.scale(mse, lambda.mse)),
                  tape.scale(f1, lambda.f1));
}

Tensor& Model::add_param(const std::string& name, Tensor t) {
  index_[name] = params_.size();
  params_.push_back(std::move(t));
  names_.push_back(name);
  return params_.back();
}

const Tensor& Model::get(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), "Model: unknown parameter '" + name + "'");
  return params_[it->second];
}

Tensor& Model::parameter(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), "Model: unknown parameter '" + name + "'");
  return params_[it->second];
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.seed, "model-init"));

  auto xavier = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(fan_in * fan_out);
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return Tensor::from({fan_in, fan_out}, std::move(v), true);
  };
  auto zeros_vec = [](std::size_t n) { return Tensor::zeros({n}, true); };
  auto ones_vec = [](std::size_t n) {
    return Tensor::from({n}, std::vector<double>(n, 1.0), true);
  };

  const std::size_t d = cfg_.d_model;
  for (const auto& [m, dim] : cfg_.modality_dims) {
    const std::string base = std::string("proj_") + modality_name(m);
    add_param(base + "_w", xavier(dim, d));
    add_param(base + "_b", zeros_vec(d));
  }
  for (const char* n : {"attn_wq", "attn_wk", "attn_wv", "attn_wo"}) {
    add_param(n, xavier(d, d));
  }
  for (const char* n : {"attn_bq", "attn_bk", "attn_bv", "attn_bo"}) {
    add_param(n, zeros_vec(d));
  }
  if (cfg_.use_layer_norm) {
    add_param("ln1_gain", ones_vec(d));
    add_param("ln1_bias", zeros_vec(d));
    add_param("ln2_gain", ones_vec(d));
    add_param("ln2_bias", zeros_vec(d));
  }
  add_param("ffn_w1", xavier(d, cfg_.ffn_dim));
  add_param("ffn_b1", zeros_vec(cfg_.ffn_dim));
  add_param("ffn_w2", xavier(cfg_.ffn_dim, d));
  add_param("ffn_b2", zeros_vec(d));

  std::size_t in_dim = d;
  for (std::size_t i = 0; i < cfg_.mlp_hidden.size(); ++i) {
    add_param("mlp_w" + std::to_string(i), xavier(in_dim, cfg_.mlp_hidden[i]));
    add_param("mlp_b" + std::to_string(i), zeros_vec(cfg_.mlp_hidden[i]));
    in_dim = cfg_.mlp_hidden[i];
  }
  const std::size_t last = cfg_.mlp_hidden.size();
  add_param("mlp_w" + std::to_string(last), xavier(in_dim, 1));
  add_param("mlp_b" + std::to_string(last), zeros_vec(1));
}

Tensor Model::encoder_block(Tape& tape, const Tensor& x,
                            std::span<const std::uint8_t> valid) const {
  const std::size_t m = x.rows();
  const std::size_t d = cfg_.d_model;
  require(x.cols() == d, "encoder_block: input width does not match d_model");
  require(valid.size() == m, "encoder_block: mask length does not match positions");
  require(std::any_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }),
          "encoder_block: all positions masked");

  const Tensor q = tape.add_rowvec(tape.matmul(x, get("attn_wq")), get("attn_bq"));
  const Tensor k = tape.add_rowvec(tape.matmul(x, get("attn_wk")), get("attn_bk"));
  const Tensor v = tape.add_rowvec(tape.matmul(x, get("attn_wv")), get("attn_bv"));

  // Additive mask: keys at invalid positions get a -1e9 logit, which
  // underflows to exactly zero attention after softmax.
  Tensor mask_bias = Tensor::zeros({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!valid[j]) mask_bias.values()[i * m + j] = -1e9;
    }
  }

  const std::size_t dk = d / cfg_.n_heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(cfg_.n_heads);
  for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
    const std::size_t c0 = h * dk, c1 = (h + 1) * dk;
    const Tensor qh = tape.slice_cols(q, c0, c1);
    const Tensor kh = tape.slice_cols(k, c0, c1);
    const Tensor vh = tape.slice_cols(v, c0, c1);
    Tensor scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dk);
    scores = tape.add(scores, mask_bias);
    const Tensor attn = tape.softmax_rows(scores);
    heads.push_back(tape.matmul(attn, vh));
  }
  const Tensor ctx = cfg_.n_heads == 1 ? heads.front() : tape.concat_cols(heads);
  Tensor attn_out = tape.add_rowvec(tape.matmul(ctx, get("attn_wo")), get("attn_bo"));

  Tensor h1 = cfg_.use_residual ? tape.add(x, attn_out) : attn_out;
  if (cfg_.use_layer_norm) {
    h1 = tape.layer_norm(h1, get("ln1_gain"), get("ln1_bias"), cfg_.layer_norm_eps);
  }

  const Tensor ffn_hidden =
      tape.relu(tape.add_rowvec(tape.matmul(h1, get("ffn_w1")), get("ffn_b1")));
  const Tensor ffn_out =
      tape.add_rowvec(tape.matmul(ffn_hidden, get("ffn_w2")), get("ffn_b2"));

  Tensor h2 = cfg_.use_residual ? tape.add(h1, ffn_out) : ffn_out;
  if (cfg_.use_layer_norm) {
    h2 = tape.layer_norm(h2, get("ln2_gain"), get("ln2_bias"), cfg_.layer_norm_eps);
  }
  return h2;
}

Tensor Model::mlp_head(Tape& tape, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < cfg_.mlp_hidden.size(); ++i) {
    const std::string si = std::to_string(i);
    h = tape.relu(tape.add_rowvec(tape.matmul(h, get("mlp_w" + si)), get("mlp_b" + si)));
  }
  const std::string sl = std::to_string(cfg_.mlp_hidden.size());
  const Tensor logits = tape.add_rowvec(tape.matmul(h, get("mlp_w" + sl)), get("mlp_b" + sl));
  // Guard against saturating to exactly 0 or 1 in float64.
  return tape.clamp(tape.sigmoid(logits), 1e-7, 1.0 - 1e-7);
}

BatchPrediction Model::forward_sentence(Tape& tape, const dataio::SentenceRecord& rec,
                                        std::span<const double> loss_mask) const {
  const std::size_t m = rec.words.size();
  require(m > 0, "forward_sentence: empty sentence");
  require(rec.mask.size() == m, "forward_sentence: mask length mismatch");
  require(rec.valid_count() > 0, "forward_sentence: no valid words");
  require(loss_mask.empty() || loss_mask.size() == m,
          "forward_sentence: loss mask length mismatch");

  auto modality_values = [&](Modality mod, const dataio::WordSample& w)
      -> const std::vector<double>& {
    switch (mod) {
      case Modality::Eye: return w.eye;
      case Modality::Eeg: return w.eeg;
      default: return w.wemb;
    }
  };

  Tensor fused;
  for (const auto& [mod, dim] : cfg_.modality_dims) {
    std::vector<double> buf(m * dim, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& src = modality_values(mod, rec.words[i]);
      require(src.size() == dim, std::string("forward_sentence: modality '") +
                                     modality_name(mod) + "' has dim " +
                                     std::to_string(src.size()) + ", expected " +
                                     std::to_string(dim));
      std::copy(src.begin(), src.end(), buf.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    const Tensor x = Tensor::from({m, dim}, std::move(buf));
    const std::string base = std::string("proj_") + modality_name(mod);
    const Tensor proj = project_modality(tape, x, get(base + "_w"), get(base + "_b"));
    fused = fused.defined() ? fuse(tape, fused, proj) : proj;
  }

  const Tensor with_pe = tape.add(fused, positional_encoding(m, cfg_.d_model));
  const Tensor enc = encoder_block(tape, with_pe, rec.mask);
  const Tensor p = mlp_head(tape, enc);

  BatchPrediction bp;
  bp.p = p;
  bp.encoder_out = enc;
  bp.y.resize(m);
  bp.mask.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    bp.y[i] = rec.words[i].label == dataio::Label::HRW ? 1.0 : 0.0;
    bp.mask[i] = loss_mask.empty() ? (rec.mask[i] ? 1.0 : 0.0) : loss_mask[i];
  }
  return bp;
}

}  // namespace rembed::model
