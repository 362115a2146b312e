#ifndef OCTLC_NN_BACKBONES_HPP_
#define OCTLC_NN_BACKBONES_HPP_

#include <memory>
#include <optional>
#include <string>

#include "octlc/nn/modules.hpp"

namespace octlc::nn {

// The three supported architecture families, all taking 3x224x224 input:
// an 18-layer residual network (512-d features), a 121-layer densely
// connected network (1024-d) and a 50-layer squeeze-excitation
// aggregated-residual network with cardinality 32, base width 4 (2048-d).
enum class BackboneId { kResnet18, kDensenet121, kSeResnext50 };

const char* to_string(BackboneId id);
// Accepts both the plain token ("resnet18") and the "-class" suffixed form.
std::optional<BackboneId> parse_backbone(const std::string& token);
// Display name in published-table style, e.g. "SE-Resnext50".
const char* display_name(BackboneId id);

// A feature extractor: image batch in, pooled feature vector out.
class Backbone {
 public:
  virtual ~Backbone() = default;
  // x is [N, 3, 224, 224]; returns [N, feature_dim()].
  virtual Var forward(const Var& x, bool train) = 0;
  virtual int feature_dim() const = 0;
  virtual BackboneId id() const = 0;

  // Seeded random initialization in registration order.
  virtual void init_params(octlc::Rng& rng) = 0;

  // Momentum of every normalization layer; checkpoint synthesis sets it
  // to 1 for one calibration pass.
  virtual void set_bn_momentum(double momentum) = 0;

  Registry& registry() { return reg_; }
  const Registry& registry() const { return reg_; }

 protected:
  Registry reg_;
};

std::unique_ptr<Backbone> make_backbone(BackboneId id);

}  // namespace octlc::nn

#endif  // OCTLC_NN_BACKBONES_HPP_
