#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedbcs/autodiff.hpp"

namespace fedbcs {

enum class Pathway { kEncoder, kDecoder };

const char* to_string(Pathway p);

struct SegNetConfig {
  std::size_t input_channels = 1;
  std::size_t class_count = 2;
  /// Channel width per resolution level; the last level is the bottleneck.
  std::vector<std::size_t> level_channels{8, 16, 32};
  /// Layer names carrying FSR and feeding prototypes. Empty selects the
  /// deepest two encoder levels and the deepest two decoder levels.
  std::vector<std::string> tap_layers;
  /// Width of the fused prototype space.
  std::size_t fused_dim = 24;
  /// false bypasses every FSR layer (identity); the gate parameters stay in
  /// the model so architectures match across methods.
  bool fsr_enabled = true;
  Real leaky_slope = Real(0.01);

  std::size_t levels() const { return level_channels.size(); }
  /// Resolved tap list in forward execution order.
  std::vector<std::string> resolved_taps() const;
  /// Throws DimensionError on an invalid configuration.
  void validate() const;

  friend bool operator==(const SegNetConfig&, const SegNetConfig&) = default;
};

/// Post-FSR features at each configured tap, keyed by layer name.
using TapBundle = std::map<std::string, Var>;

struct SegNetOutput {
  Var logits;  // [c,H,W], unnormalized
  TapBundle taps;
};

/// Miniature UNet: per level two 3x3 conv blocks with instance norm and
/// leaky ReLU, maxpool down, nearest upsample + skip concat up, 1x1 head.
/// At a tapped layer the second conv output passes through FSR before its
/// instance norm; the tap reads the block output.
class SegNet {
 public:
  explicit SegNet(SegNetConfig config);

  /// Parameters bound onto one tape. `trainable == false` binds constants,
  /// so nothing is recorded for backward.
  class Bound {
   public:
    Var operator[](const std::string& id) const;
    Tape& tape() const { return *tape_; }

   private:
    friend class SegNet;
    Tape* tape_ = nullptr;
    std::map<std::string, Var> vars_;
  };

  Bound bind(Tape& tape, bool trainable = true);

  /// image [input_channels,H,W]; H and W divisible by 2^(levels-1).
  SegNetOutput forward(const Bound& bound, const Tensor& image) const;

  /// Kaiming-uniform conv and fusion weights, zero biases, zero style
  /// gates. Deterministic in `seed`.
  void init_parameters(std::uint64_t seed);

  const SegNetConfig& config() const { return config_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  /// Tap names of one pathway, in forward order (shallow first).
  const std::vector<std::string>& pathway_taps(Pathway p) const {
    return p == Pathway::kEncoder ? encoder_taps_ : decoder_taps_;
  }
  std::size_t tap_channels(const std::string& tap) const;
  /// Summed channel width of a pathway's taps (fusion head input width).
  std::size_t pathway_width(Pathway p) const;

  static std::string fusion_weight_id(Pathway p);
  static std::string fusion_bias_id(Pathway p);

 private:
  void add_parameter(const std::string& id, Shape shape);
  void add_conv(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k);
  Var block(const Bound& b, const std::string& name, Var x, TapBundle& taps) const;

  SegNetConfig config_;
  ParameterStore params_;
  std::vector<std::string> encoder_taps_;
  std::vector<std::string> decoder_taps_;
  std::map<std::string, std::size_t> layer_channels_;
};

}  // namespace fedbcs
