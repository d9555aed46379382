// Copyright 2026 The vxa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "vxa/errors.hpp"
#include "vxa/nn.hpp"
#include "vxa/random.hpp"

namespace vxa {

/// Layer sizes and loss weights. Defaults reproduce the full-size attacker:
/// 192-d audio and 768-d text backbones, 1001 training speakers.
struct ModelConfig {
  int audio_in = 192;
  int text_in = 768;
  int proj_dim = 512;
  int confidence_hidden = 256;
  int gate_hidden = 512;
  int n_classes = 1001;
  double dropout_audio = 0.3;
  double dropout_text = 0.1;
  double aam_scale = 30.0;
  double aam_margin = 0.15;
  double lambda_e = 1.0;
  double lambda_f = 0.1;
  double lambda_a = 0.1;
  double lambda_t = 0.1;
  double layer_norm_eps = 1e-5;

  void validate() const {
    for (int d : {audio_in, text_in, proj_dim, confidence_hidden, gate_hidden, n_classes})
      if (d <= 0) throw ArgumentError("model dimensions must be positive");
    if (!(aam_scale > 0)) throw ArgumentError("aam_scale must be positive");
    if (aam_margin < 0 || aam_margin >= std::numbers::pi / 2) throw ArgumentError("aam_margin must lie in [0, pi/2)");
    for (double l : {lambda_e, lambda_f, lambda_a, lambda_t})
      if (l < 0) throw ArgumentError("loss weights must be non-negative");
    if (dropout_audio < 0 || dropout_audio >= 1 || dropout_text < 0 || dropout_text >= 1)
      throw ArgumentError("dropout probabilities must lie in [0, 1)");
  }
};

enum class EmbeddingMode { fusion, text_only, audio_only };

inline std::string_view to_string(EmbeddingMode m) {
  switch (m) {
    case EmbeddingMode::fusion: return "fusion";
    case EmbeddingMode::text_only: return "text_only";
    case EmbeddingMode::audio_only: return "audio_only";
  }
  return "?";
}

inline std::optional<EmbeddingMode> parse_embedding_mode(std::string_view s) {
  if (s == "fusion") return EmbeddingMode::fusion;
  if (s == "text_only") return EmbeddingMode::text_only;
  if (s == "audio_only") return EmbeddingMode::audio_only;
  return std::nullopt;
}

/// Projected embeddings (batch x proj_dim) and confidences in (0, 1).
struct BranchOutput {
  nn::Matrix embedding;
  Eigen::VectorXd confidence;
};

/// Concat(gamma_a * e_a, gamma_t * e_t), row by row.
inline nn::Matrix fuse(const BranchOutput& audio, const BranchOutput& text) {
  if (audio.embedding.rows() != text.embedding.rows() || audio.embedding.cols() != text.embedding.cols() ||
      audio.confidence.size() != audio.embedding.rows() || text.confidence.size() != text.embedding.rows())
    throw ShapeError("fuse: branch outputs disagree in shape");
  nn::Matrix out(audio.embedding.rows(), 2 * audio.embedding.cols());
  out.leftCols(audio.embedding.cols()) = audio.confidence.asDiagonal() * audio.embedding;
  out.rightCols(text.embedding.cols()) = text.confidence.asDiagonal() * text.embedding;
  return out;
}

/// z_ens = w_f z_fusion + w_a z_audio + w_t z_text, with per-row weights
/// in the columns of `weights` (fusion, audio, text).
inline nn::Matrix ensemble_logits(const nn::Matrix& fusion, const nn::Matrix& audio, const nn::Matrix& text,
                                  const nn::Matrix& weights) {
  if (fusion.rows() != audio.rows() || fusion.rows() != text.rows() || fusion.cols() != audio.cols() ||
      fusion.cols() != text.cols() || weights.rows() != fusion.rows() || weights.cols() != 3)
    throw ShapeError("ensemble_logits: shape mismatch");
  return weights.col(0).asDiagonal() * fusion + weights.col(1).asDiagonal() * audio +
         weights.col(2).asDiagonal() * text;
}

/// LayerNorm -> FC -> GELU -> Dropout projection with a
/// FC -> ReLU -> FC -> Sigmoid confidence estimator on top.
class ModalityBranch {
 public:
  ModalityBranch() = default;
  ModalityBranch(const std::string& name, int in, int proj, int hidden, double dropout, double ln_eps)
      : norm_(name + ".norm", in, ln_eps),
        proj_(name + ".proj", in, proj),
        drop_(dropout),
        conf_hidden_(name + ".confidence.fc1", proj, hidden),
        conf_out_(name + ".confidence.fc2", hidden, 1) {}

  void init(Rng& rng) {
    proj_.init(rng);
    conf_hidden_.init(rng);
    conf_out_.init(rng);
  }

  BranchOutput forward(const nn::Matrix& x, nn::Mode mode, Rng& rng) {
    pre_activation_ = proj_.forward(norm_.forward(x));
    out_.embedding = drop_.forward(nn::gelu(pre_activation_), mode, rng);
    hidden_ = conf_hidden_.forward(out_.embedding);
    out_.confidence = nn::sigmoid(conf_out_.forward(nn::relu(hidden_))).col(0);
    return out_;
  }

  /// Backpropagates gradients arriving at the embedding and the confidence.
  void backward(const nn::Matrix& d_embedding, const Eigen::VectorXd& d_confidence) {
    const nn::Matrix dpre_conf = nn::sigmoid_backward(nn::Matrix(out_.confidence), nn::Matrix(d_confidence));
    const nn::Matrix dhidden = nn::relu_backward(hidden_, conf_out_.backward(dpre_conf));
    const nn::Matrix de = d_embedding + conf_hidden_.backward(dhidden);
    const nn::Matrix dpre = nn::gelu_backward(pre_activation_, drop_.backward(de));
    norm_.backward(proj_.backward(dpre));
  }

  void collect(std::vector<nn::Parameter*>& out) {
    norm_.collect(out);
    proj_.collect(out);
    conf_hidden_.collect(out);
    conf_out_.collect(out);
  }

  int input_dim() const { return static_cast<int>(proj_.weight().value.rows()); }

 private:
  nn::LayerNorm norm_;
  nn::Linear proj_;
  nn::Dropout drop_;
  nn::Linear conf_hidden_;
  nn::Linear conf_out_;
  nn::Matrix pre_activation_;
  nn::Matrix hidden_;
  BranchOutput out_;
};

/// FC -> ReLU -> FC -> Softmax over [e_a, e_t, gamma_a, gamma_t].
class EnsembleGate {
 public:
  EnsembleGate() = default;
  EnsembleGate(int proj, int hidden) : fc1_("gate.fc1", 2 * proj + 2, hidden), fc2_("gate.fc2", hidden, 3), proj_(proj) {}

  void init(Rng& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }

  nn::Matrix forward(const BranchOutput& audio, const BranchOutput& text) {
    if (audio.embedding.cols() != proj_ || text.embedding.cols() != proj_)
      throw ShapeError("gate: expected embeddings of width " + std::to_string(proj_));
    nn::Matrix in(audio.embedding.rows(), 2 * proj_ + 2);
    in << audio.embedding, text.embedding, audio.confidence, text.confidence;
    hidden_ = fc1_.forward(in);
    weights_ = nn::softmax(fc2_.forward(nn::relu(hidden_)));
    return weights_;
  }

  /// Returns the gradient for the gate input [e_a, e_t, gamma_a, gamma_t].
  nn::Matrix backward(const nn::Matrix& dweights) {
    const nn::Matrix dlogits = nn::softmax_backward(weights_, dweights);
    return fc1_.backward(nn::relu_backward(hidden_, fc2_.backward(dlogits)));
  }

  void collect(std::vector<nn::Parameter*>& out) {
    fc1_.collect(out);
    fc2_.collect(out);
  }

 private:
  nn::Linear fc1_;
  nn::Linear fc2_;
  int proj_ = 0;
  nn::Matrix hidden_;
  nn::Matrix weights_;
};

struct FusionOutput {
  BranchOutput audio;
  BranchOutput text;
  nn::Matrix e_fusion;     // batch x 2*proj_dim
  nn::Matrix w_ens;        // batch x 3, columns (fusion, audio, text)
  nn::Matrix cos_audio;    // batch x classes
  nn::Matrix cos_text;
  nn::Matrix cos_fusion;
  nn::Matrix cos_ensemble;
};

struct LossBreakdown {
  double total = 0.0;
  double ensemble = 0.0;
  double fusion = 0.0;
  double audio = 0.0;
  double text = 0.0;
};

/// lambda_e L_ens + lambda_f L_fusion + lambda_a L_audio + lambda_t L_text
inline double combine_losses(const ModelConfig& c, double ensemble, double fusion, double audio, double text) {
  return c.lambda_e * ensemble + c.lambda_f * fusion + c.lambda_a * audio + c.lambda_t * text;
}

/// Audio and text branches, confidence-weighted fusion, the ensemble gate
/// and three cosine heads, trained with four AAM terms.
class FusionModel {
 public:
  explicit FusionModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    audio_ = ModalityBranch("audio", config_.audio_in, config_.proj_dim, config_.confidence_hidden,
                            config_.dropout_audio, config_.layer_norm_eps);
    text_ = ModalityBranch("text", config_.text_in, config_.proj_dim, config_.confidence_hidden,
                           config_.dropout_text, config_.layer_norm_eps);
    gate_ = EnsembleGate(config_.proj_dim, config_.gate_hidden);
    head_audio_ = nn::CosineClassifier("head.audio", config_.proj_dim, config_.n_classes);
    head_text_ = nn::CosineClassifier("head.text", config_.proj_dim, config_.n_classes);
    head_fusion_ = nn::CosineClassifier("head.fusion", 2 * config_.proj_dim, config_.n_classes);
    audio_.collect(params_);
    text_.collect(params_);
    gate_.collect(params_);
    head_audio_.collect(params_);
    head_text_.collect(params_);
    head_fusion_.collect(params_);
  }

  FusionModel(const ModelConfig& config, std::uint64_t init_seed) : FusionModel(config) { initialize(init_seed); }

  // Parameter pointers refer into this object.
  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;

  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    audio_.init(rng);
    text_.init(rng);
    gate_.init(rng);
    head_audio_.init(rng);
    head_text_.init(rng);
    head_fusion_.init(rng);
  }

  const ModelConfig& config() const { return config_; }
  const std::vector<nn::Parameter*>& parameters() { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params_) n += static_cast<std::size_t>(p->size());
    return n;
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  BranchOutput audio_branch(const nn::Matrix& audio, nn::Mode mode, Rng& rng) {
    check_input(audio, config_.audio_in, "audio");
    return audio_.forward(audio, mode, rng);
  }

  BranchOutput text_branch(const nn::Matrix& text, nn::Mode mode, Rng& rng) {
    check_input(text, config_.text_in, "text");
    return text_.forward(text, mode, rng);
  }

  nn::Matrix gate(const BranchOutput& audio, const BranchOutput& text) { return gate_.forward(audio, text); }

  /// Full forward pass over a batch; rows of `audio` and `text` are paired.
  FusionOutput forward(const nn::Matrix& audio, const nn::Matrix& text, nn::Mode mode, Rng& rng) {
    if (audio.rows() != text.rows()) throw ShapeError("forward: audio and text batch sizes differ");
    FusionOutput out;
    out.audio = audio_branch(audio, mode, rng);
    out.text = text_branch(text, mode, rng);
    out.e_fusion = fuse(out.audio, out.text);
    out.w_ens = gate_.forward(out.audio, out.text);
    out.cos_audio = head_audio_.forward(out.audio.embedding);
    out.cos_text = head_text_.forward(out.text.embedding);
    out.cos_fusion = head_fusion_.forward(out.e_fusion);
    out.cos_ensemble = ensemble_logits(out.cos_fusion, out.cos_audio, out.cos_text, out.w_ens);
    return out;
  }

  /// Weighted sum of the four AAM terms for the last forward pass. With
  /// `backward` set, accumulates every parameter's gradient.
  LossBreakdown loss(const FusionOutput& out, const std::vector<int>& targets, bool backward) {
    const nn::AamParams aam{config_.aam_scale, config_.aam_margin};
    nn::Matrix d_ens, d_fus, d_aud, d_txt;
    LossBreakdown l;
    l.ensemble = nn::aam_loss(out.cos_ensemble, targets, aam, backward ? &d_ens : nullptr);
    l.fusion = nn::aam_loss(out.cos_fusion, targets, aam, backward ? &d_fus : nullptr);
    l.audio = nn::aam_loss(out.cos_audio, targets, aam, backward ? &d_aud : nullptr);
    l.text = nn::aam_loss(out.cos_text, targets, aam, backward ? &d_txt : nullptr);
    for (auto [value, name] : {std::pair{l.ensemble, "ensemble"}, {l.fusion, "fusion"}, {l.audio, "audio"}, {l.text, "text"}})
      if (!std::isfinite(value)) throw NumericError(std::string("non-finite ") + name + " loss term");
    l.total = combine_losses(config_, l.ensemble, l.fusion, l.audio, l.text);
    if (!std::isfinite(l.total)) throw NumericError("non-finite total loss");
    if (!backward) return l;

    d_ens *= config_.lambda_e;
    const nn::Matrix& w = out.w_ens;
    nn::Matrix dw(w.rows(), 3);
    dw.col(0) = (d_ens.array() * out.cos_fusion.array()).rowwise().sum();
    dw.col(1) = (d_ens.array() * out.cos_audio.array()).rowwise().sum();
    dw.col(2) = (d_ens.array() * out.cos_text.array()).rowwise().sum();
    d_fus = config_.lambda_f * d_fus + w.col(0).asDiagonal() * d_ens;
    d_aud = config_.lambda_a * d_aud + w.col(1).asDiagonal() * d_ens;
    d_txt = config_.lambda_t * d_txt + w.col(2).asDiagonal() * d_ens;

    const int p = config_.proj_dim;
    const nn::Matrix de_fusion = head_fusion_.backward(d_fus);
    nn::Matrix de_audio = head_audio_.backward(d_aud);
    nn::Matrix de_text = head_text_.backward(d_txt);

    de_audio += out.audio.confidence.asDiagonal() * de_fusion.leftCols(p);
    de_text += out.text.confidence.asDiagonal() * de_fusion.rightCols(p);
    Eigen::VectorXd dgamma_audio = (out.audio.embedding.array() * de_fusion.leftCols(p).array()).rowwise().sum();
    Eigen::VectorXd dgamma_text = (out.text.embedding.array() * de_fusion.rightCols(p).array()).rowwise().sum();

    const nn::Matrix dgate_in = gate_.backward(dw);
    de_audio += dgate_in.leftCols(p);
    de_text += dgate_in.middleCols(p, p);
    dgamma_audio += dgate_in.col(2 * p);
    dgamma_text += dgate_in.col(2 * p + 1);

    audio_.backward(de_audio, dgamma_audio);
    text_.backward(de_text, dgamma_text);
    return l;
  }

  /// Eval-mode speaker representation; the classifier heads are unused.
  /// Missing inputs are allowed only when the mode does not need them.
  nn::Matrix extract_embedding(const nn::Matrix* audio, const nn::Matrix* text, EmbeddingMode mode) {
    Rng unused(0);
    switch (mode) {
      case EmbeddingMode::audio_only:
        if (!audio) throw ArgumentError("audio_only embedding requires audio input");
        return audio_branch(*audio, nn::Mode::eval, unused).embedding;
      case EmbeddingMode::text_only:
        if (!text) throw ArgumentError("text_only embedding requires text input");
        return text_branch(*text, nn::Mode::eval, unused).embedding;
      case EmbeddingMode::fusion: {
        if (!audio || !text) throw ArgumentError("fusion embedding requires both audio and text input");
        if (audio->rows() != text->rows()) throw ShapeError("extract_embedding: batch sizes differ");
        const BranchOutput a = audio_branch(*audio, nn::Mode::eval, unused);
        const BranchOutput t = text_branch(*text, nn::Mode::eval, unused);
        return fuse(a, t);
      }
    }
    throw ArgumentError("unknown embedding mode");
  }

  Eigen::VectorXd extract_embedding(const Eigen::VectorXd* audio, const Eigen::VectorXd* text, EmbeddingMode mode) {
    std::optional<nn::Matrix> a, t;
    if (audio) a = nn::Matrix(audio->transpose());
    if (text) t = nn::Matrix(text->transpose());
    return extract_embedding(a ? &*a : nullptr, t ? &*t : nullptr, mode).row(0).transpose();
  }

  int embedding_dim(EmbeddingMode mode) const {
    return mode == EmbeddingMode::fusion ? 2 * config_.proj_dim : config_.proj_dim;
  }

 private:
  static void check_input(const nn::Matrix& x, int expected, const char* which) {
    if (x.cols() != expected)
      throw ShapeError(std::string(which) + " input has width " + std::to_string(x.cols()) + ", expected " +
                       std::to_string(expected));
    if (!x.allFinite()) throw NumericError(std::string(which) + " input contains non-finite values");
  }

  ModelConfig config_;
  ModalityBranch audio_;
  ModalityBranch text_;
  EnsembleGate gate_;
  nn::CosineClassifier head_audio_;
  nn::CosineClassifier head_text_;
  nn::CosineClassifier head_fusion_;
  std::vector<nn::Parameter*> params_;
};

}  // namespace vxa
