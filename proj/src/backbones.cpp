#include "octlc/nn/backbones.hpp"

#include <vector>

#include "octlc/error.hpp"

namespace octlc::nn {

const char* to_string(BackboneId id) {
  switch (id) {
    case BackboneId::kResnet18: return "resnet18";
    case BackboneId::kDensenet121: return "densenet121";
    case BackboneId::kSeResnext50: return "se-resnext50";
  }
  return "?";
}

std::optional<BackboneId> parse_backbone(const std::string& token) {
  std::string t = token;
  const std::string suffix = "-class";
  if (t.size() > suffix.size() &&
      t.compare(t.size() - suffix.size(), suffix.size(), suffix) == 0) {
    t = t.substr(0, t.size() - suffix.size());
  }
  if (t == "resnet18") return BackboneId::kResnet18;
  if (t == "densenet121") return BackboneId::kDensenet121;
  if (t == "se-resnext50" || t == "se_resnext50") return BackboneId::kSeResnext50;
  return std::nullopt;
}

const char* display_name(BackboneId id) {
  switch (id) {
    case BackboneId::kResnet18: return "Resnet18";
    case BackboneId::kDensenet121: return "Densenet121";
    case BackboneId::kSeResnext50: return "SE-Resnext50";
  }
  return "?";
}

namespace {

// ---- 18-layer residual network ----

struct BasicBlock {
  Conv2dLayer conv1, conv2;
  BatchNorm2dLayer bn1, bn2;
  bool has_down = false;
  Conv2dLayer down_conv;
  BatchNorm2dLayer down_bn;

  BasicBlock(Registry& reg, const std::string& prefix, int in_ch, int out_ch,
             int stride) {
    conv1 = Conv2dLayer(reg, prefix + ".conv1", in_ch, out_ch, 3, stride, 1);
    bn1 = BatchNorm2dLayer(reg, prefix + ".bn1", out_ch);
    conv2 = Conv2dLayer(reg, prefix + ".conv2", out_ch, out_ch, 3, 1, 1);
    bn2 = BatchNorm2dLayer(reg, prefix + ".bn2", out_ch);
    if (stride != 1 || in_ch != out_ch) {
      has_down = true;
      down_conv = Conv2dLayer(reg, prefix + ".downsample.0", in_ch, out_ch, 1,
                              stride, 0);
      down_bn = BatchNorm2dLayer(reg, prefix + ".downsample.1", out_ch);
    }
  }

  Var forward(const Var& x, bool train) const {
    Var out = relu(bn1(conv1(x), train));
    out = bn2(conv2(out), train);
    const Var identity = has_down ? down_bn(down_conv(x), train) : x;
    return relu(add(out, identity));
  }

  void init(octlc::Rng& rng) {
    conv1.init(rng);
    bn1.init(rng);
    conv2.init(rng);
    bn2.init(rng);
    if (has_down) {
      down_conv.init(rng);
      down_bn.init(rng);
    }
  }

  void set_bn_momentum(double m) {
    bn1.momentum = m;
    bn2.momentum = m;
    if (has_down) down_bn.momentum = m;
  }
};

class Resnet18Backbone final : public Backbone {
 public:
  Resnet18Backbone() {
    conv1_ = Conv2dLayer(reg_, "conv1", 3, 64, 7, 2, 3);
    bn1_ = BatchNorm2dLayer(reg_, "bn1", 64);
    const int chans[4] = {64, 128, 256, 512};
    int in_ch = 64;
    for (int stage = 0; stage < 4; ++stage) {
      const int out_ch = chans[stage];
      const int stride = stage == 0 ? 1 : 2;
      const std::string base = "layer" + std::to_string(stage + 1);
      blocks_.emplace_back(reg_, base + ".0", in_ch, out_ch, stride);
      blocks_.emplace_back(reg_, base + ".1", out_ch, out_ch, 1);
      in_ch = out_ch;
    }
  }

  Var forward(const Var& x, bool train) override {
    Var out = relu(bn1_(conv1_(x), train));
    out = maxpool2d(out, 3, 2, 1);
    for (const auto& block : blocks_) out = block.forward(out, train);
    return global_avgpool(out);
  }

  int feature_dim() const override { return 512; }
  BackboneId id() const override { return BackboneId::kResnet18; }

  void init_params(octlc::Rng& rng) override {
    conv1_.init(rng);
    bn1_.init(rng);
    for (auto& block : blocks_) block.init(rng);
  }

  void set_bn_momentum(double m) override {
    bn1_.momentum = m;
    for (auto& block : blocks_) block.set_bn_momentum(m);
  }

 private:
  Conv2dLayer conv1_;
  BatchNorm2dLayer bn1_;
  std::vector<BasicBlock> blocks_;
};

// ---- 121-layer densely connected network ----

struct DenseLayer {
  BatchNorm2dLayer norm1, norm2;
  Conv2dLayer conv1, conv2;

  DenseLayer(Registry& reg, const std::string& prefix, int in_ch, int growth,
             int bn_size) {
    norm1 = BatchNorm2dLayer(reg, prefix + ".norm1", in_ch);
    conv1 = Conv2dLayer(reg, prefix + ".conv1", in_ch, bn_size * growth, 1, 1, 0);
    norm2 = BatchNorm2dLayer(reg, prefix + ".norm2", bn_size * growth);
    conv2 = Conv2dLayer(reg, prefix + ".conv2", bn_size * growth, growth, 3, 1, 1);
  }

  Var forward(const Var& x, bool train) const {
    Var out = conv1(relu(norm1(x, train)));
    return conv2(relu(norm2(out, train)));
  }

  void init(octlc::Rng& rng) {
    norm1.init(rng);
    conv1.init(rng);
    norm2.init(rng);
    conv2.init(rng);
  }

  void set_bn_momentum(double m) {
    norm1.momentum = m;
    norm2.momentum = m;
  }
};

struct Transition {
  BatchNorm2dLayer norm;
  Conv2dLayer conv;

  Transition(Registry& reg, const std::string& prefix, int in_ch, int out_ch) {
    norm = BatchNorm2dLayer(reg, prefix + ".norm", in_ch);
    conv = Conv2dLayer(reg, prefix + ".conv", in_ch, out_ch, 1, 1, 0);
  }

  Var forward(const Var& x, bool train) const {
    return avgpool2d(conv(relu(norm(x, train))), 2, 2);
  }

  void init(octlc::Rng& rng) {
    norm.init(rng);
    conv.init(rng);
  }

  void set_bn_momentum(double m) { norm.momentum = m; }
};

class Densenet121Backbone final : public Backbone {
 public:
  Densenet121Backbone() {
    conv0_ = Conv2dLayer(reg_, "features.conv0", 3, 64, 7, 2, 3);
    norm0_ = BatchNorm2dLayer(reg_, "features.norm0", 64);
    const int block_config[4] = {6, 12, 24, 16};
    constexpr int kGrowth = 32;
    constexpr int kBnSize = 4;
    int channels = 64;
    for (int bi = 0; bi < 4; ++bi) {
      const std::string base = "features.denseblock" + std::to_string(bi + 1);
      std::vector<DenseLayer> block;
      for (int li = 0; li < block_config[bi]; ++li) {
        block.emplace_back(reg_, base + ".denselayer" + std::to_string(li + 1),
                           channels, kGrowth, kBnSize);
        channels += kGrowth;
      }
      blocks_.push_back(std::move(block));
      if (bi < 3) {
        transitions_.emplace_back(
            reg_, "features.transition" + std::to_string(bi + 1), channels,
            channels / 2);
        channels /= 2;
      }
    }
    norm5_ = BatchNorm2dLayer(reg_, "features.norm5", channels);
    feature_dim_ = channels;  // 1024
  }

  Var forward(const Var& x, bool train) override {
    Var out = relu(norm0_(conv0_(x), train));
    out = maxpool2d(out, 3, 2, 1);
    for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
      for (const auto& layer : blocks_[bi]) {
        Var grown = layer.forward(out, train);
        out = concat_channels(std::vector<Var>{out, grown});
      }
      if (bi < transitions_.size()) out = transitions_[bi].forward(out, train);
    }
    out = relu(norm5_(out, train));
    return global_avgpool(out);
  }

  int feature_dim() const override { return feature_dim_; }
  BackboneId id() const override { return BackboneId::kDensenet121; }

  void init_params(octlc::Rng& rng) override {
    conv0_.init(rng);
    norm0_.init(rng);
    for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
      for (auto& layer : blocks_[bi]) layer.init(rng);
      if (bi < transitions_.size()) transitions_[bi].init(rng);
    }
    norm5_.init(rng);
  }

  void set_bn_momentum(double m) override {
    norm0_.momentum = m;
    for (auto& block : blocks_) {
      for (auto& layer : block) layer.set_bn_momentum(m);
    }
    for (auto& t : transitions_) t.set_bn_momentum(m);
    norm5_.momentum = m;
  }

 private:
  Conv2dLayer conv0_;
  BatchNorm2dLayer norm0_;
  std::vector<std::vector<DenseLayer>> blocks_;
  std::vector<Transition> transitions_;
  BatchNorm2dLayer norm5_;
  int feature_dim_ = 0;
};

// ---- 50-layer squeeze-excitation aggregated-residual network (32x4d) ----

struct SeBottleneck {
  Conv2dLayer conv1, conv2, conv3;
  BatchNorm2dLayer bn1, bn2, bn3;
  LinearLayer se_fc1, se_fc2;
  bool has_down = false;
  Conv2dLayer down_conv;
  BatchNorm2dLayer down_bn;

  SeBottleneck(Registry& reg, const std::string& prefix, int in_ch, int width,
               int out_ch, int stride, int cardinality, int se_reduction) {
    conv1 = Conv2dLayer(reg, prefix + ".conv1", in_ch, width, 1, 1, 0);
    bn1 = BatchNorm2dLayer(reg, prefix + ".bn1", width);
    conv2 = Conv2dLayer(reg, prefix + ".conv2", width, width, 3, stride, 1,
                        cardinality);
    bn2 = BatchNorm2dLayer(reg, prefix + ".bn2", width);
    conv3 = Conv2dLayer(reg, prefix + ".conv3", width, out_ch, 1, 1, 0);
    bn3 = BatchNorm2dLayer(reg, prefix + ".bn3", out_ch);
    se_fc1 = LinearLayer(reg, prefix + ".se.fc1", out_ch, out_ch / se_reduction);
    se_fc2 = LinearLayer(reg, prefix + ".se.fc2", out_ch / se_reduction, out_ch);
    if (stride != 1 || in_ch != out_ch) {
      has_down = true;
      down_conv = Conv2dLayer(reg, prefix + ".downsample.0", in_ch, out_ch, 1,
                              stride, 0);
      down_bn = BatchNorm2dLayer(reg, prefix + ".downsample.1", out_ch);
    }
  }

  Var forward(const Var& x, bool train) const {
    Var out = relu(bn1(conv1(x), train));
    out = relu(bn2(conv2(out), train));
    out = bn3(conv3(out), train);
    Var s = global_avgpool(out);
    s = sigmoid(se_fc2(relu(se_fc1(s))));
    out = channel_scale(out, s);
    const Var identity = has_down ? down_bn(down_conv(x), train) : x;
    return relu(add(out, identity));
  }

  void init(octlc::Rng& rng) {
    conv1.init(rng);
    bn1.init(rng);
    conv2.init(rng);
    bn2.init(rng);
    conv3.init(rng);
    bn3.init(rng);
    se_fc1.init(rng);
    se_fc2.init(rng);
    if (has_down) {
      down_conv.init(rng);
      down_bn.init(rng);
    }
  }

  void set_bn_momentum(double m) {
    bn1.momentum = m;
    bn2.momentum = m;
    bn3.momentum = m;
    if (has_down) down_bn.momentum = m;
  }
};

class SeResnext50Backbone final : public Backbone {
 public:
  SeResnext50Backbone() {
    conv1_ = Conv2dLayer(reg_, "conv1", 3, 64, 7, 2, 3);
    bn1_ = BatchNorm2dLayer(reg_, "bn1", 64);
    const int planes[4] = {64, 128, 256, 512};
    const int depths[4] = {3, 4, 6, 3};
    constexpr int kCardinality = 32;
    constexpr int kBaseWidth = 4;
    constexpr int kExpansion = 4;
    constexpr int kSeReduction = 16;
    int in_ch = 64;
    for (int stage = 0; stage < 4; ++stage) {
      const int width = planes[stage] * kBaseWidth / 64 * kCardinality;
      const int out_ch = planes[stage] * kExpansion;
      const std::string base = "layer" + std::to_string(stage + 1);
      for (int bi = 0; bi < depths[stage]; ++bi) {
        const int stride = (bi == 0 && stage > 0) ? 2 : 1;
        blocks_.emplace_back(reg_, base + "." + std::to_string(bi), in_ch, width,
                             out_ch, stride, kCardinality, kSeReduction);
        in_ch = out_ch;
      }
    }
  }

  Var forward(const Var& x, bool train) override {
    Var out = relu(bn1_(conv1_(x), train));
    out = maxpool2d(out, 3, 2, 1);
    for (const auto& block : blocks_) out = block.forward(out, train);
    return global_avgpool(out);
  }

  int feature_dim() const override { return 2048; }
  BackboneId id() const override { return BackboneId::kSeResnext50; }

  void init_params(octlc::Rng& rng) override {
    conv1_.init(rng);
    bn1_.init(rng);
    for (auto& block : blocks_) block.init(rng);
  }

  void set_bn_momentum(double m) override {
    bn1_.momentum = m;
    for (auto& block : blocks_) block.set_bn_momentum(m);
  }

 private:
  Conv2dLayer conv1_;
  BatchNorm2dLayer bn1_;
  std::vector<SeBottleneck> blocks_;
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(BackboneId id) {
  switch (id) {
    case BackboneId::kResnet18: return std::make_unique<Resnet18Backbone>();
    case BackboneId::kDensenet121: return std::make_unique<Densenet121Backbone>();
    case BackboneId::kSeResnext50: return std::make_unique<SeResnext50Backbone>();
  }
  throw ValidationError("backbone: unknown id");
}

}  // namespace octlc::nn
