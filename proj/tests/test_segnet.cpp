#include <gtest/gtest.h>

#include <random>

#include "fedbcs/errors.hpp"
#include "fedbcs/losses.hpp"
#include "fedbcs/ops.hpp"
#include "fedbcs/segnet.hpp"
#include "test_util.hpp"

namespace fedbcs {
namespace {

using testing::random_tensor;

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }

// Closed-form count for a UNet with two 3x3 convs per block, a 1x1 head,
// a 2x2C+2 gate per tap and one fusion head per pathway.
std::size_t expected_param_count(const SegNetConfig& c, const std::vector<std::size_t>& enc_tap_channels,
                                 const std::vector<std::size_t>& dec_tap_channels) {
  const auto& ch = c.level_channels;
  std::size_t n = 0;
  for (std::size_t l = 0; l < ch.size(); ++l) {
    n += conv_params(l == 0 ? c.input_channels : ch[l - 1], ch[l], 3) + conv_params(ch[l], ch[l], 3);
  }
  for (std::size_t l = 0; l + 1 < ch.size(); ++l) {
    n += conv_params(ch[l + 1] + ch[l], ch[l], 3) + conv_params(ch[l], ch[l], 3);
  }
  n += conv_params(ch[0], c.class_count, 1);
  std::size_t enc_width = 0, dec_width = 0;
  for (auto t : enc_tap_channels) {
    n += 2 * 2 * t + 2;
    enc_width += t;
  }
  for (auto t : dec_tap_channels) {
    n += 2 * 2 * t + 2;
    dec_width += t;
  }
  n += c.fused_dim * enc_width + c.fused_dim + c.fused_dim * dec_width + c.fused_dim;
  return n;
}

TEST(SegNet, DefaultParameterCountMatchesClosedForm) {
  SegNet net{SegNetConfig{}};
  const std::size_t expected = expected_param_count(SegNetConfig{}, {16, 32}, {16, 8});
  EXPECT_EQ(parameter_count(net.parameters()), expected);
  EXPECT_EQ(expected, 31698u);
}

TEST(SegNet, CustomTapsParameterCount) {
  SegNetConfig c;
  c.level_channels = {4, 6, 8, 10};
  c.tap_layers = {"enc0", "enc3", "dec0", "dec2"};
  c.fused_dim = 8;
  SegNet net{c};
  EXPECT_EQ(parameter_count(net.parameters()), expected_param_count(c, {4, 10}, {4, 8}));
}

TEST(SegNet, DefaultTapsAreDeepestTwoPerPathway) {
  SegNet net{SegNetConfig{}};
  EXPECT_EQ(net.pathway_taps(Pathway::kEncoder), (std::vector<std::string>{"enc1", "enc2"}));
  EXPECT_EQ(net.pathway_taps(Pathway::kDecoder), (std::vector<std::string>{"dec1", "dec0"}));
  EXPECT_EQ(net.pathway_width(Pathway::kEncoder), 48u);
  EXPECT_EQ(net.pathway_width(Pathway::kDecoder), 24u);
}

TEST(SegNet, ForwardShapesAndTaps) {
  std::mt19937_64 rng(1);
  SegNet net{SegNetConfig{}};
  net.init_parameters(3);
  Tape t;
  const auto out = net.forward(net.bind(t), random_tensor({1, 16, 16}, rng, 0, 1));
  EXPECT_EQ(out.logits.shape(), (Shape{2, 16, 16}));
  ASSERT_EQ(out.taps.size(), 4u);
  EXPECT_EQ(out.taps.at("enc1").shape(), (Shape{16, 8, 8}));
  EXPECT_EQ(out.taps.at("enc2").shape(), (Shape{32, 4, 4}));
  EXPECT_EQ(out.taps.at("dec1").shape(), (Shape{16, 8, 8}));
  EXPECT_EQ(out.taps.at("dec0").shape(), (Shape{8, 16, 16}));
}

TEST(SegNet, ZeroHeadGivesEqualLogits) {
  SegNet net{SegNetConfig{}};
  net.init_parameters(4);
  net.parameters().at("head.weight").value.fill(0);
  Tape t;
  const Tensor logits = net.forward(net.bind(t), Tensor::zeros({1, 8, 8})).logits.value();
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(logits[i], logits[64 + i]);
}

TEST(SegNet, InitIsDeterministicAndGatesStartAtZero) {
  SegNet a{SegNetConfig{}}, b{SegNetConfig{}};
  a.init_parameters(7);
  b.init_parameters(7);
  EXPECT_EQ(snapshot(a.parameters()), snapshot(b.parameters()));
  b.init_parameters(8);
  EXPECT_NE(snapshot(a.parameters()), snapshot(b.parameters()));
  for (const auto& [id, p] : a.parameters()) {
    if (id.find(".fsr.gate.") != std::string::npos || id.ends_with(".bias")) EXPECT_EQ(p.value.max_abs(), 0) << id;
  }
}

TEST(SegNet, BypassedFsrEqualsIdentityGates) {
  std::mt19937_64 rng(2);
  const Tensor image = random_tensor({1, 16, 16}, rng, 0, 1);
  SegNetConfig off;
  off.fsr_enabled = false;
  SegNet bypass{off}, gated{SegNetConfig{}};
  bypass.init_parameters(5);
  gated.init_parameters(5);
  // Saturated gates: lambda_norm ~ 0, lambda_org ~ 1.
  for (auto& [id, p] : gated.parameters()) {
    if (id.ends_with(".fsr.gate.bias")) p.value = Tensor::vector({-40, 40});
  }
  Tape t1, t2;
  const Tensor a = bypass.forward(bypass.bind(t1), image).logits.value();
  const Tensor b = gated.forward(gated.bind(t2), image).logits.value();
  EXPECT_LT(max_abs_diff(a, b), 1e-7);
}

TEST(SegNet, GradientsReachEveryTrainedParameter) {
  std::mt19937_64 rng(3);
  SegNet net{SegNetConfig{}};
  net.init_parameters(6);
  zero_grads(net.parameters());
  Tape t;
  const auto out = net.forward(net.bind(t), random_tensor({1, 16, 16}, rng, 0, 1));
  t.backward(dice_loss(out.logits, testing::box_labels(16, 16, 3, 11, 4, 12)));
  for (const auto& [id, p] : net.parameters()) {
    if (id.rfind("fusion.", 0) == 0) continue;  // only prototype losses reach the fusion heads
    EXPECT_TRUE(p.gradient.all_finite()) << id;
    if (id.ends_with(".weight")) EXPECT_GT(p.gradient.max_abs(), 0) << id;
  }
}

TEST(SegNet, NonTrainableBindingRecordsNoGradients) {
  SegNet net{SegNetConfig{}};
  net.init_parameters(1);
  Tape t;
  const auto out = net.forward(net.bind(t, false), Tensor::full({1, 8, 8}, 0.5));
  EXPECT_FALSE(t.requires_grad(out.logits));
}

TEST(SegNet, InvalidConfigurationsThrow) {
  SegNetConfig two_levels;
  two_levels.level_channels = {4, 8};
  EXPECT_THROW(SegNet{two_levels}, DimensionError);
  SegNetConfig one_class;
  one_class.class_count = 1;
  EXPECT_THROW(SegNet{one_class}, DimensionError);
  SegNetConfig bad_tap;
  bad_tap.tap_layers = {"enc1", "enc2", "dec1", "dec5"};
  EXPECT_THROW(SegNet{bad_tap}, DimensionError);
  SegNetConfig one_dec;
  one_dec.tap_layers = {"enc1", "enc2", "dec1"};
  EXPECT_THROW(SegNet{one_dec}, DimensionError);
  SegNetConfig wide;
  wide.fused_dim = 25;  // decoder concat width is 24
  EXPECT_THROW(SegNet{wide}, DimensionError);
}

TEST(SegNet, BadInputShapeThrows) {
  SegNet net{SegNetConfig{}};
  Tape t;
  auto b = net.bind(t);
  EXPECT_THROW(net.forward(b, Tensor::zeros({1, 10, 8})), DimensionError);
  EXPECT_THROW(net.forward(b, Tensor::zeros({2, 8, 8})), DimensionError);
}

}  // namespace
}  // namespace fedbcs
