#ifndef OCTLC_MODELKIT_HPP_
#define OCTLC_MODELKIT_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "octlc/checkpoint.hpp"
#include "octlc/nn/backbones.hpp"
#include "octlc/rng.hpp"

namespace octlc {

using nn::BackboneId;

// SCR: random initialization, everything trainable.
// FT:  pretrained initialization, everything trainable.
// RC:  pretrained initialization, only the classifier head trainable; the
//      backbone stays in evaluation mode during training so normalization
//      statistics are frozen too.
enum class Regime { kScr, kFt, kRc };

const char* to_string(Regime regime);
std::optional<Regime> parse_regime(const std::string& token);

enum class DigestScope { kBackbone, kHead, kAll };

// Backbone feature extractor plus dropout and a fresh 2-logit head.
class ClassifierModel {
 public:
  ClassifierModel(BackboneId backbone_id, Regime regime, double dropout_p,
                  std::uint64_t seed);

  // batch is [N, 3, 224, 224]; returns the logits node of a live tape.
  // Dropout is active only in train mode and draws from the model's stream.
  nn::Var forward(const nn::Tensor& batch, bool train_mode);

  // Eval-mode backbone features, [N, feature_dim]; no tape kept.
  nn::Tensor extract_features(const nn::Tensor& batch);

  // Head-only forward from cached features [N, feature_dim]; consumes the
  // same dropout draws as forward() would, so the frozen-backbone fast
  // path reproduces the full path bit for bit.
  nn::Var head_forward(const nn::Tensor& features, bool train_mode);

  // Eval-mode invasive probabilities, one per row of batch.
  std::vector<double> predict_invasive_probs(const nn::Tensor& batch);

  std::vector<nn::Var> trainable_params() const;

  BackboneId backbone_id() const { return backbone_id_; }
  Regime regime() const { return regime_; }
  double dropout_p() const { return dropout_p_; }
  int feature_dim() const { return backbone_->feature_dim(); }
  bool backbone_frozen() const { return regime_ == Regime::kRc; }

  nn::Backbone& backbone() { return *backbone_; }
  const nn::Backbone& backbone() const { return *backbone_; }
  const nn::Registry& head_registry() const { return head_reg_; }
  nn::Registry& head_registry() { return head_reg_; }

 private:
  BackboneId backbone_id_;
  Regime regime_;
  double dropout_p_;
  std::unique_ptr<nn::Backbone> backbone_;
  nn::Registry head_reg_;
  nn::LinearLayer head_;
  Rng dropout_rng_;
};

// Builds a model for the regime. FT/RC load the pretrained checkpoint
// (resolved via weights_path or the cache); SCR initializes randomly. The
// 2-output head is always freshly seeded.
std::unique_ptr<ClassifierModel> build_model(
    BackboneId backbone_id, Regime regime, double dropout_p, std::uint64_t seed,
    const std::optional<std::string>& weights_path = std::nullopt);

// Content hash over the scope's trainable-eligible parameters (weights and
// biases) in registration order; equal iff bit-equal.
std::string parameter_digest(const ClassifierModel& model, DigestScope scope);
// Like parameter_digest but also covers buffers (normalization statistics).
std::string state_digest(const ClassifierModel& model, DigestScope scope);

// Trained-model persistence: all parameters and buffers, with metadata.
void save_model(const ClassifierModel& model, const std::string& path,
                const std::map<std::string, std::string>& extra_metadata = {});
// Restores parameters/buffers into a freshly built model of the same shape.
void load_model_state(ClassifierModel& model, const std::string& path);

// ---- pretrained checkpoint cache ----

// Resolution order: explicit path, $OCTLC_WEIGHTS_DIR, ~/.cache/octlc/weights.
std::string weights_cache_dir();
std::string pretrained_checkpoint_path(BackboneId id,
                                       const std::optional<std::string>& dir = std::nullopt);

// Writes a deterministic stand-in checkpoint: seeded random parameters
// whose normalization statistics are then calibrated on seeded structured
// noise, so eval-mode activations are well scaled. Used where the
// published checkpoints cannot be downloaded; real weights imported via
// the fetch tool drop into the same cache path.
void synthesize_pretrained(BackboneId id, std::uint64_t seed,
                           const std::string& out_path);

// Copies/validates a checkpoint file into the cache, checking a sha256
// digest when given. Returns the installed path.
std::string install_weights(BackboneId id, const std::string& source_file,
                            const std::optional<std::string>& expected_sha256,
                            const std::optional<std::string>& dir = std::nullopt);

}  // namespace octlc

#endif  // OCTLC_MODELKIT_HPP_
