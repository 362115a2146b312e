#include "octlc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "octlc/error.hpp"
#include "octlc/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace octlc {

namespace {

constexpr std::uint64_t kShuffleTag = 0xe0;
constexpr std::uint64_t kAugmentTag = 0xa0;

struct Sample {
  std::string lesion_id;
  std::string image_id;
  std::string path;  // resolved absolute/relative path on disk
  int label = 0;
};

std::vector<Sample> collect_training_samples(const DatasetManifest& manifest,
                                             const Fold& fold) {
  std::vector<Sample> samples;
  for (const auto& lesion_id : fold.train) {
    const LesionRecord& rec = manifest.lesion(lesion_id);
    for (const auto& img : rec.images) {
      samples.push_back({rec.lesion_id, img.image_id,
                         manifest.resolve_image_path(img),
                         rec.label == LesionLabel::kInvasive ? 1 : 0});
    }
  }
  return samples;
}

FloatImage load_image(const std::string& path, PathAudit* audit) {
  if (audit != nullptr) audit->reads.push_back(path);
  return to_float(read_pgm(path));
}

}  // namespace

void TrainConfig::validate() const {
  if (learning_rate < 0.0) throw ValidationError("train: negative learning rate");
  if (batch_size <= 0) throw ValidationError("train: batch_size must be positive");
  if (epochs <= 0) throw ValidationError("train: epochs must be positive");
  if (class_weights_override) {
    const auto& w = *class_weights_override;
    if (!(w[0] > 0.0) || !(w[1] > 0.0)) {
      throw ValidationError("train: class weights must be positive");
    }
    if (std::abs(w[0] + w[1] - 1.0) > 1e-9) {
      throw ValidationError("train: class weights must sum to 1");
    }
  }
}

std::array<double, 2> class_weights(long n_benign, long n_invasive) {
  if (n_benign <= 0 || n_invasive <= 0) {
    throw ValidationError("class_weights: both class counts must be positive");
  }
  const double total = static_cast<double>(n_benign + n_invasive);
  // (1/n_c) / sum_k (1/n_k) reduces to n_other / (n_c + n_other).
  return {static_cast<double>(n_invasive) / total,
          static_cast<double>(n_benign) / total};
}

LossResult weighted_ce_loss(const nn::Tensor& logits, const std::vector<int>& labels,
                            const std::array<double, 2>& weights) {
  if (logits.ndim() != 2 || logits.dim(1) != 2) {
    throw ValidationError("loss: logits must be [B, 2], got " +
                          nn::shape_str(logits.shape));
  }
  const int batch = logits.dim(0);
  if (static_cast<int>(labels.size()) != batch) {
    throw ValidationError("loss: labels/logits batch mismatch");
  }
  if (!(weights[0] > 0.0) || !(weights[1] > 0.0)) {
    throw ValidationError("loss: class weights must be positive");
  }

  LossResult result;
  result.dlogits = nn::Tensor({batch, 2});
  double weight_sum = 0.0;
  for (int i = 0; i < batch; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw ValidationError("loss: label outside {0, 1}");
    }
    weight_sum += weights[static_cast<std::size_t>(labels[i])];
  }

  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    const double l0 = logits.data[static_cast<std::size_t>(i) * 2];
    const double l1 = logits.data[static_cast<std::size_t>(i) * 2 + 1];
    const int y = labels[static_cast<std::size_t>(i)];
    const double m = std::max(l0, l1);
    const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
    const double w = weights[static_cast<std::size_t>(y)];
    loss += w * (lse - (y == 0 ? l0 : l1));

    const double p0 = std::exp(l0 - lse);
    const double p1 = std::exp(l1 - lse);
    const double scale = w / weight_sum;
    result.dlogits.data[static_cast<std::size_t>(i) * 2] =
        static_cast<float>(scale * (p0 - (y == 0 ? 1.0 : 0.0)));
    result.dlogits.data[static_cast<std::size_t>(i) * 2 + 1] =
        static_cast<float>(scale * (p1 - (y == 1 ? 1.0 : 0.0)));
  }
  result.loss = loss / weight_sum;
  return result;
}

AdamOptimizer::AdamOptimizer(std::vector<nn::Var> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) {
    p->ensure_grad();
    p->zero_grad();
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    nn::Tensor& value = params_[pi]->value;
    const nn::Tensor& grad = params_[pi]->grad;
    nn::Tensor& m = m_[pi];
    nn::Tensor& v = v_[pi];
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double g = static_cast<double>(grad.data[i]);
      const double mi = beta1_ * m.data[i] + (1.0 - beta1_) * g;
      const double vi = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
      m.data[i] = static_cast<float>(mi);
      v.data[i] = static_cast<float>(vi);
      value.data[i] -= static_cast<float>(lr_ * (mi / bc1) /
                                          (std::sqrt(vi / bc2) + eps_));
    }
  }
}

PreprocessSpec resolve_preprocess(const PreprocessSpec& spec,
                                  const DatasetManifest& manifest, const Fold& fold,
                                  PathAudit* audit) {
  PreprocessSpec resolved = spec;
  if (spec.normalization == Normalization::kPretrainedStats) {
    resolved.mean = kPretrainedMean;
    resolved.stddev = kPretrainedStd;
    return resolved;
  }
  std::vector<FloatImage> images;
  for (const auto& lesion_id : fold.train) {
    const LesionRecord& rec = manifest.lesion(lesion_id);
    for (const auto& img : rec.images) {
      images.push_back(load_image(manifest.resolve_image_path(img), audit));
    }
  }
  std::vector<const FloatImage*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& im : images) ptrs.push_back(&im);
  compute_dataset_stats(ptrs, resolved);
  return resolved;
}

TrainHistory train_fold(ClassifierModel& model, const DatasetManifest& manifest,
                        const Fold& fold, const TrainConfig& cfg,
                        const PreprocessSpec& preprocess_spec,
                        const AugmentSpec& augment_spec, PathAudit* audit,
                        const std::string& diagnostics_dir) {
  cfg.validate();
  preprocess_spec.validate();
  if (augment_spec.enabled) augment_spec.validate();

  const std::vector<Sample> samples = collect_training_samples(manifest, fold);
  if (samples.empty()) {
    throw ValidationError("train: fold has an empty training set");
  }
  long n_benign = 0, n_invasive = 0;
  for (const auto& s : samples) (s.label == 0 ? n_benign : n_invasive) += 1;
  const std::array<double, 2> weights =
      cfg.class_weights_override ? *cfg.class_weights_override
                                 : class_weights(n_benign, n_invasive);

  std::vector<FloatImage> raw_images;
  raw_images.reserve(samples.size());
  for (const auto& s : samples) raw_images.push_back(load_image(s.path, audit));

  const int n = static_cast<int>(samples.size());
  const int target_h = preprocess_spec.target_height_px;
  const int target_w = preprocess_spec.target_width_px;

  // Frozen backbone + no augmentation: every epoch would recompute the
  // same eval-mode features, so compute them once up front.
  const bool cache_features = model.backbone_frozen() && !augment_spec.enabled;
  const int feat_dim = model.feature_dim();
  nn::Tensor feature_cache;
  if (cache_features) {
    feature_cache = nn::Tensor({n, feat_dim});
    constexpr int kExtractBatch = 4;
    for (int start = 0; start < n; start += kExtractBatch) {
      const int count = std::min(kExtractBatch, n - start);
      nn::Tensor batch({count, 3, target_h, target_w});
      for (int i = 0; i < count; ++i) {
        const Chw chw = preprocess(raw_images[static_cast<std::size_t>(start + i)],
                                   preprocess_spec);
        std::copy(chw.data.begin(), chw.data.end(),
                  batch.ptr() + static_cast<std::size_t>(i) * chw.data.size());
      }
      const nn::Tensor feats = model.extract_features(batch);
      std::copy(feats.data.begin(), feats.data.end(),
                feature_cache.ptr() + static_cast<std::size_t>(start) * feat_dim);
    }
  }

  AdamOptimizer optimizer(model.trainable_params(), cfg);
  TrainHistory history;

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(
        derive_seed(cfg.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      std::vector<int> labels(static_cast<std::size_t>(count));
      nn::Var logits;

      if (cache_features) {
        nn::Tensor fb({count, feat_dim});
        for (int i = 0; i < count; ++i) {
          const int idx = order[static_cast<std::size_t>(start + i)];
          labels[static_cast<std::size_t>(i)] = samples[static_cast<std::size_t>(idx)].label;
          std::copy(feature_cache.ptr() + static_cast<std::size_t>(idx) * feat_dim,
                    feature_cache.ptr() + static_cast<std::size_t>(idx + 1) * feat_dim,
                    fb.ptr() + static_cast<std::size_t>(i) * feat_dim);
        }
        logits = model.head_forward(fb, true);
      } else {
        nn::Tensor xb({count, 3, target_h, target_w});
        for (int i = 0; i < count; ++i) {
          const int idx = order[static_cast<std::size_t>(start + i)];
          labels[static_cast<std::size_t>(i)] = samples[static_cast<std::size_t>(idx)].label;
          FloatImage img = raw_images[static_cast<std::size_t>(idx)];
          if (augment_spec.enabled) {
            Rng aug_rng(derive_seed(
                cfg.seed, {kAugmentTag, static_cast<std::uint64_t>(epoch),
                           static_cast<std::uint64_t>(idx)}));
            img = augment(img, augment_spec, aug_rng);
          }
          const Chw chw = preprocess(img, preprocess_spec);
          std::copy(chw.data.begin(), chw.data.end(),
                    xb.ptr() + static_cast<std::size_t>(i) * chw.data.size());
        }
        logits = model.forward(xb, true);
      }

      LossResult loss = weighted_ce_loss(logits->value, labels, weights);
      if (!std::isfinite(loss.loss)) {
        json dump;
        dump["epoch"] = epoch;
        dump["step"] = history.steps;
        dump["loss"] = "non-finite";
        json ids = json::array();
        for (int i = 0; i < count; ++i) {
          const int idx = order[static_cast<std::size_t>(start + i)];
          ids.push_back(samples[static_cast<std::size_t>(idx)].lesion_id);
        }
        dump["batch_lesion_ids"] = ids;
        if (!diagnostics_dir.empty()) {
          fs::create_directories(diagnostics_dir);
          std::ofstream out(fs::path(diagnostics_dir) / "train_abort.json",
                            std::ios::trunc);
          out << dump.dump(2) << "\n";
        }
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch) + ", step " +
                           std::to_string(history.steps));
      }

      optimizer.zero_grad();
      logits->ensure_grad().data = loss.dlogits.data;
      nn::backward(logits);
      optimizer.step();

      loss_sum += loss.loss;
      ++batches;
      ++history.steps;
    }
    history.epoch_mean_loss.push_back(loss_sum / batches);
  }

  history.backbone_digest = parameter_digest(model, DigestScope::kBackbone);
  history.head_digest = parameter_digest(model, DigestScope::kHead);
  return history;
}

double predict_lesion(ClassifierModel& model, const DatasetManifest& manifest,
                      const LesionRecord& lesion, const PreprocessSpec& preprocess_spec,
                      PathAudit* audit, std::map<std::string, double>* per_image) {
  if (lesion.images.empty()) {
    throw ValidationError("predict: lesion has no images: " + lesion.lesion_id);
  }
  const int count = static_cast<int>(lesion.images.size());
  nn::Tensor batch({count, 3, preprocess_spec.target_height_px,
                    preprocess_spec.target_width_px});
  for (int i = 0; i < count; ++i) {
    const FloatImage img = load_image(
        manifest.resolve_image_path(lesion.images[static_cast<std::size_t>(i)]), audit);
    const Chw chw = preprocess(img, preprocess_spec);
    std::copy(chw.data.begin(), chw.data.end(),
              batch.ptr() + static_cast<std::size_t>(i) * chw.data.size());
  }
  const std::vector<double> probs = model.predict_invasive_probs(batch);
  double sum = 0.0;
  for (int i = 0; i < count; ++i) {
    sum += probs[static_cast<std::size_t>(i)];
    if (per_image != nullptr) {
      (*per_image)[lesion.images[static_cast<std::size_t>(i)].image_id] =
          probs[static_cast<std::size_t>(i)];
    }
  }
  return sum / count;
}

}  // namespace octlc
