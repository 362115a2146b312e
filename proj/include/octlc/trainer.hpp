#ifndef OCTLC_TRAINER_HPP_
#define OCTLC_TRAINER_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "octlc/dataset.hpp"
#include "octlc/modelkit.hpp"
#include "octlc/pipeline.hpp"
#include "octlc/splits.hpp"

namespace octlc {

struct TrainConfig {
  double learning_rate = 1e-5;  // the paper's "10e-6"
  int batch_size = 5;
  int epochs = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Explicit override; when absent the weights are computed from the
  // training-image class counts of the fold.
  std::optional<std::array<double, 2>> class_weights_override;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> epoch_mean_loss;
  long steps = 0;
  std::string backbone_digest;
  std::string head_digest;
};

// Normalized inverse class frequency: w_c = (1/n_c) / sum_k (1/n_k).
// Index 0 = benign, 1 = invasive; components sum to 1.
std::array<double, 2> class_weights(long n_benign, long n_invasive);

struct LossResult {
  double loss = 0.0;
  nn::Tensor dlogits;  // gradient with respect to the logits
};

// Weighted cross entropy, normalized by the sum of per-sample weights
// (weighted average). Gradient of sample i is
// (w_{y_i} / sum_j w_{y_j}) * (softmax_i - onehot_i). Computed in double.
LossResult weighted_ce_loss(const nn::Tensor& logits, const std::vector<int>& labels,
                            const std::array<double, 2>& weights);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<nn::Var> params, const TrainConfig& cfg);

  void zero_grad();
  void step();
  long step_count() const { return t_; }

 private:
  std::vector<nn::Var> params_;
  std::vector<nn::Tensor> m_;
  std::vector<nn::Tensor> v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// Records every image file a training/evaluation routine opened; the
// leakage tests assert validation paths never show up during training.
struct PathAudit {
  std::vector<std::string> reads;
};

// Trains the model on all images of the fold's training lesions:
// seeded-shuffled epochs, batches of batch_size (final partial batch
// kept), augmentation (training only) then preprocessing, weighted CE,
// one Adam step per batch. Validation images are never read. When the
// backbone is frozen and augmentation is off, backbone features are
// computed once and reused; this reproduces the direct path bit for bit.
// preprocess_spec must already carry its statistics (resolve_preprocess).
TrainHistory train_fold(ClassifierModel& model, const DatasetManifest& manifest,
                        const Fold& fold, const TrainConfig& cfg,
                        const PreprocessSpec& preprocess_spec,
                        const AugmentSpec& augment_spec, PathAudit* audit = nullptr,
                        const std::string& diagnostics_dir = "");

// Mean invasive probability over the lesion's images (eval mode).
double predict_lesion(ClassifierModel& model, const DatasetManifest& manifest,
                      const LesionRecord& lesion, const PreprocessSpec& preprocess_spec,
                      PathAudit* audit = nullptr,
                      std::map<std::string, double>* per_image = nullptr);

// The per-fold preprocess spec a run actually uses: dataset statistics are
// computed from the fold's training images when the spec asks for them.
PreprocessSpec resolve_preprocess(const PreprocessSpec& spec,
                                  const DatasetManifest& manifest, const Fold& fold,
                                  PathAudit* audit = nullptr);

}  // namespace octlc

#endif  // OCTLC_TRAINER_HPP_
