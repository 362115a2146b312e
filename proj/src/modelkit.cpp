#include "octlc/modelkit.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "octlc/error.hpp"
#include "octlc/sha256.hpp"

namespace fs = std::filesystem;

namespace octlc {

namespace {

constexpr std::uint64_t kBackboneStream = 0xb0;
constexpr std::uint64_t kHeadStream = 0x1d;

}  // namespace

const char* to_string(Regime regime) {
  switch (regime) {
    case Regime::kScr: return "SCR";
    case Regime::kFt: return "FT";
    case Regime::kRc: return "RC";
  }
  return "?";
}

std::optional<Regime> parse_regime(const std::string& token) {
  if (token == "SCR" || token == "scr") return Regime::kScr;
  if (token == "FT" || token == "ft") return Regime::kFt;
  if (token == "RC" || token == "rc") return Regime::kRc;
  return std::nullopt;
}

ClassifierModel::ClassifierModel(BackboneId backbone_id, Regime regime,
                                 double dropout_p, std::uint64_t seed)
    : backbone_id_(backbone_id),
      regime_(regime),
      dropout_p_(dropout_p),
      backbone_(nn::make_backbone(backbone_id)),
      dropout_rng_(derive_seed(seed, {0xd0})) {
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ValidationError("model: dropout_p must lie in [0, 1)");
  }
  head_ = nn::LinearLayer(head_reg_, "head.fc", backbone_->feature_dim(), 2);
  Rng head_rng(derive_seed(seed, {kHeadStream}));
  head_.init(head_rng);
  backbone_->registry().set_trainable(regime != Regime::kRc);
}

nn::Var ClassifierModel::forward(const nn::Tensor& batch, bool train_mode) {
  if (batch.ndim() != 4 || batch.dim(1) != 3) {
    throw ValidationError("model: expected [N,3,H,W] input, got " +
                          nn::shape_str(batch.shape));
  }
  nn::Var x = nn::make_leaf(batch, false);
  // RC keeps the backbone in eval mode: frozen means statistics too.
  const bool backbone_train = train_mode && regime_ != Regime::kRc;
  nn::Var features = backbone_->forward(x, backbone_train);
  nn::Var dropped = nn::dropout(features, dropout_p_, train_mode, dropout_rng_);
  return head_(dropped);
}

nn::Tensor ClassifierModel::extract_features(const nn::Tensor& batch) {
  nn::Var x = nn::make_leaf(batch, false);
  return backbone_->forward(x, false)->value;
}

nn::Var ClassifierModel::head_forward(const nn::Tensor& features, bool train_mode) {
  nn::Var x = nn::make_leaf(features, false);
  nn::Var dropped = nn::dropout(x, dropout_p_, train_mode, dropout_rng_);
  return head_(dropped);
}

std::vector<double> ClassifierModel::predict_invasive_probs(const nn::Tensor& batch) {
  nn::Var logits = forward(batch, false);
  const int n = logits->value.dim(0);
  std::vector<double> probs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double l0 = logits->value.data[static_cast<std::size_t>(i) * 2];
    const double l1 = logits->value.data[static_cast<std::size_t>(i) * 2 + 1];
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m);
    const double e1 = std::exp(l1 - m);
    probs[static_cast<std::size_t>(i)] = e1 / (e0 + e1);
  }
  return probs;
}

std::vector<nn::Var> ClassifierModel::trainable_params() const {
  std::vector<nn::Var> out;
  if (regime_ != Regime::kRc) {
    for (const auto& p : backbone_->registry().params()) out.push_back(p.var);
  }
  for (const auto& p : head_reg_.params()) out.push_back(p.var);
  return out;
}

std::unique_ptr<ClassifierModel> build_model(
    BackboneId backbone_id, Regime regime, double dropout_p, std::uint64_t seed,
    const std::optional<std::string>& weights_path) {
  auto model =
      std::make_unique<ClassifierModel>(backbone_id, regime, dropout_p, seed);
  if (regime == Regime::kScr) {
    Rng rng(derive_seed(seed, {kBackboneStream}));
    model->backbone().init_params(rng);
    return model;
  }

  const std::string path = weights_path
                               ? *weights_path
                               : pretrained_checkpoint_path(backbone_id);
  if (!fs::exists(path)) {
    throw ConfigError(std::string("model: pretrained weights for ") +
                      nn::to_string(backbone_id) + " not found at " + path +
                      " (regime " + to_string(regime) +
                      " needs them; run the fetch-weights tool)");
  }
  const Checkpoint ckpt = load_safetensors(path);
  auto it_arch = ckpt.metadata.find("arch");
  if (it_arch != ckpt.metadata.end() &&
      it_arch->second != nn::to_string(backbone_id)) {
    throw ConfigError("model: checkpoint " + path + " is for arch " +
                      it_arch->second + ", expected " +
                      nn::to_string(backbone_id));
  }
  auto load_into = [&ckpt, &path](const std::string& name, nn::Tensor& dst) {
    const nn::Tensor* src = ckpt.find(name);
    if (src == nullptr) {
      throw ConfigError("model: checkpoint " + path + " is missing tensor " + name);
    }
    if (src->shape != dst.shape) {
      throw ConfigError("model: checkpoint tensor " + name + " has shape " +
                        nn::shape_str(src->shape) + ", expected " +
                        nn::shape_str(dst.shape));
    }
    dst.data = src->data;
  };
  for (const auto& p : model->backbone().registry().params()) {
    load_into(p.name, p.var->value);
  }
  for (const auto& b : model->backbone().registry().buffers()) {
    load_into(b.name, *b.tensor);
  }
  return model;
}

namespace {

void digest_registry_params(Sha256& h, const nn::Registry& reg) {
  for (const auto& p : reg.params()) {
    h.update(p.name);
    h.update(p.var->value.ptr(), p.var->value.numel() * sizeof(float));
  }
}

void digest_registry_buffers(Sha256& h, const nn::Registry& reg) {
  for (const auto& b : reg.buffers()) {
    h.update(b.name);
    h.update(b.tensor->ptr(), b.tensor->numel() * sizeof(float));
  }
}

}  // namespace

std::string parameter_digest(const ClassifierModel& model, DigestScope scope) {
  Sha256 h;
  if (scope != DigestScope::kHead) {
    digest_registry_params(h, model.backbone().registry());
  }
  if (scope != DigestScope::kBackbone) {
    digest_registry_params(h, model.head_registry());
  }
  return h.hex_digest();
}

std::string state_digest(const ClassifierModel& model, DigestScope scope) {
  Sha256 h;
  if (scope != DigestScope::kHead) {
    digest_registry_params(h, model.backbone().registry());
    digest_registry_buffers(h, model.backbone().registry());
  }
  if (scope != DigestScope::kBackbone) {
    digest_registry_params(h, model.head_registry());
    digest_registry_buffers(h, model.head_registry());
  }
  return h.hex_digest();
}

void save_model(const ClassifierModel& model, const std::string& path,
                const std::map<std::string, std::string>& extra_metadata) {
  Checkpoint ckpt;
  ckpt.metadata["arch"] = nn::to_string(model.backbone_id());
  ckpt.metadata["regime"] = to_string(model.regime());
  for (const auto& [k, v] : extra_metadata) ckpt.metadata[k] = v;
  for (const auto& p : model.backbone().registry().params()) {
    ckpt.tensors.emplace_back(p.name, p.var->value);
  }
  for (const auto& b : model.backbone().registry().buffers()) {
    ckpt.tensors.emplace_back(b.name, *b.tensor);
  }
  for (const auto& p : model.head_registry().params()) {
    ckpt.tensors.emplace_back(p.name, p.var->value);
  }
  save_safetensors(ckpt, path);
}

void load_model_state(ClassifierModel& model, const std::string& path) {
  const Checkpoint ckpt = load_safetensors(path);
  auto load_into = [&ckpt, &path](const std::string& name, nn::Tensor& dst) {
    const nn::Tensor* src = ckpt.find(name);
    if (src == nullptr) {
      throw ConfigError("model: file " + path + " is missing tensor " + name);
    }
    if (src->shape != dst.shape) {
      throw ConfigError("model: tensor " + name + " shape mismatch in " + path);
    }
    dst.data = src->data;
  };
  for (const auto& p : model.backbone().registry().params()) {
    load_into(p.name, p.var->value);
  }
  for (const auto& b : model.backbone().registry().buffers()) {
    load_into(b.name, *b.tensor);
  }
  for (const auto& p : model.head_registry().params()) {
    load_into(p.name, p.var->value);
  }
}

std::string weights_cache_dir() {
  if (const char* env = std::getenv("OCTLC_WEIGHTS_DIR"); env != nullptr && *env) {
    return env;
  }
  if (const char* home = std::getenv("HOME"); home != nullptr && *home) {
    return (fs::path(home) / ".cache" / "octlc" / "weights").string();
  }
  return ".octlc-weights";
}

std::string pretrained_checkpoint_path(BackboneId id,
                                       const std::optional<std::string>& dir) {
  const std::string base = dir ? *dir : weights_cache_dir();
  return (fs::path(base) / (std::string(nn::to_string(id)) + ".safetensors"))
      .string();
}

void synthesize_pretrained(BackboneId id, std::uint64_t seed,
                           const std::string& out_path) {
  auto backbone = nn::make_backbone(id);
  Rng rng(derive_seed(seed, {0x51}));
  backbone->init_params(rng);

  // One train-mode pass over a structured-noise batch with momentum 1
  // writes that batch's statistics straight into the running buffers, so
  // every normalization layer is calibrated to its actual input scale.
  backbone->set_bn_momentum(1.0);
  constexpr int kCalibBatch = 4;
  constexpr int kSide = 224;
  nn::Tensor calib({kCalibBatch, 3, kSide, kSide});
  Rng noise_rng(derive_seed(seed, {0x52}));
  for (int n = 0; n < kCalibBatch; ++n) {
    // A few random sinusoids give smooth structure; noise gives texture.
    const double fr = noise_rng.uniform(1.0, 6.0);
    const double fc = noise_rng.uniform(1.0, 6.0);
    const double pr = noise_rng.uniform(0.0, 6.283185307179586);
    const double pc = noise_rng.uniform(0.0, 6.283185307179586);
    for (int c = 0; c < 3; ++c) {
      for (int r = 0; r < kSide; ++r) {
        for (int col = 0; col < kSide; ++col) {
          const double smooth =
              std::sin(fr * r / kSide * 6.283185307179586 + pr) *
              std::cos(fc * col / kSide * 6.283185307179586 + pc);
          calib.data[((static_cast<std::size_t>(n) * 3 + c) * kSide + r) * kSide +
                     col] =
              static_cast<float>(0.7 * smooth + 0.7 * noise_rng.normal());
        }
      }
    }
  }
  nn::Var x = nn::make_leaf(std::move(calib), false);
  backbone->forward(x, true);
  backbone->set_bn_momentum(0.1);

  Checkpoint ckpt;
  ckpt.metadata["arch"] = nn::to_string(id);
  ckpt.metadata["source"] = "synthetic-calibrated";
  ckpt.metadata["seed"] = std::to_string(seed);
  for (const auto& p : backbone->registry().params()) {
    ckpt.tensors.emplace_back(p.name, p.var->value);
  }
  for (const auto& b : backbone->registry().buffers()) {
    ckpt.tensors.emplace_back(b.name, *b.tensor);
  }
  const fs::path parent = fs::path(out_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  save_safetensors(ckpt, out_path);
}

std::string install_weights(BackboneId id, const std::string& source_file,
                            const std::optional<std::string>& expected_sha256,
                            const std::optional<std::string>& dir) {
  if (!fs::exists(source_file)) {
    throw IoError("weights: source file not found: " + source_file);
  }
  if (expected_sha256) {
    const std::string actual = Sha256::hex_of_file(source_file);
    if (actual != *expected_sha256) {
      throw ValidationError("weights: sha256 mismatch for " + source_file +
                            ": expected " + *expected_sha256 + ", got " + actual);
    }
  }
  // Validate the container and arch before installing.
  const Checkpoint ckpt = load_safetensors(source_file);
  auto it = ckpt.metadata.find("arch");
  if (it != ckpt.metadata.end() && it->second != nn::to_string(id)) {
    throw ValidationError("weights: file declares arch " + it->second +
                          ", expected " + nn::to_string(id));
  }
  const std::string dest = pretrained_checkpoint_path(id, dir);
  fs::create_directories(fs::path(dest).parent_path());
  fs::copy_file(source_file, dest, fs::copy_options::overwrite_existing);
  return dest;
}

}  // namespace octlc
