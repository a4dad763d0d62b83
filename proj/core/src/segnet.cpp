#include "fedbcs/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fedbcs/errors.hpp"
#include "fedbcs/ops.hpp"
#include "fedbcs/spectral.hpp"

namespace fedbcs {

const char* to_string(Pathway p) { return p == Pathway::kEncoder ? "enc" : "dec"; }

namespace {

std::string enc_name(std::size_t level) { return "enc" + std::to_string(level); }
std::string dec_name(std::size_t level) { return "dec" + std::to_string(level); }

bool is_encoder_layer(const std::string& name) { return name.rfind("enc", 0) == 0; }

}  // namespace

std::vector<std::string> SegNetConfig::resolved_taps() const {
  std::vector<std::string> taps = tap_layers;
  if (taps.empty() && levels() >= 3) {
    const std::size_t last = levels() - 1;
    taps = {enc_name(last - 1), enc_name(last), dec_name(last - 1), dec_name(last - 2)};
  }
  // Forward order: encoders ascending, then decoders descending.
  auto rank = [this](const std::string& name) -> std::size_t {
    const std::size_t level = std::stoul(name.substr(3));
    return is_encoder_layer(name) ? level : levels() + (levels() - level);
  };
  std::sort(taps.begin(), taps.end(), [&](const auto& a, const auto& b) { return rank(a) < rank(b); });
  return taps;
}

void SegNetConfig::validate() const {
  if (input_channels == 0) throw DimensionError("segnet: input_channels must be positive");
  if (class_count < 2) throw DimensionError("segnet: class_count must be >= 2");
  if (levels() < 3) throw DimensionError("segnet: need at least 3 levels for two decoder taps");
  for (auto c : level_channels) {
    if (c == 0) throw DimensionError("segnet: level channels must be positive");
  }
  std::size_t n_enc = 0, n_dec = 0;
  std::vector<std::string> seen;
  for (const auto& name : tap_layers) {
    if (name.size() < 4 || (name.rfind("enc", 0) != 0 && name.rfind("dec", 0) != 0) ||
        name.find_first_not_of("0123456789", 3) != std::string::npos) {
      throw DimensionError("segnet: bad tap layer name '" + name + "'");
    }
    const std::size_t level = std::stoul(name.substr(3));
    const bool enc = is_encoder_layer(name);
    if ((enc && level >= levels()) || (!enc && level + 1 >= levels())) {
      throw DimensionError("segnet: tap layer '" + name + "' does not exist");
    }
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) {
      throw DimensionError("segnet: duplicate tap layer '" + name + "'");
    }
    seen.push_back(name);
  }
  for (const auto& name : resolved_taps()) (is_encoder_layer(name) ? n_enc : n_dec)++;
  if (n_enc < 2 || n_dec < 2) throw DimensionError("segnet: need >= 2 encoder taps and >= 2 decoder taps");
  if (fused_dim == 0) throw DimensionError("segnet: fused_dim must be positive");
}

SegNet::SegNet(SegNetConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t levels = config_.levels();
  const auto& ch = config_.level_channels;

  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t in = l == 0 ? config_.input_channels : ch[l - 1];
    add_conv(enc_name(l) + ".conv1", in, ch[l], 3);
    add_conv(enc_name(l) + ".conv2", ch[l], ch[l], 3);
    layer_channels_[enc_name(l)] = ch[l];
  }
  for (std::size_t l = levels - 1; l-- > 0;) {
    add_conv(dec_name(l) + ".conv1", ch[l + 1] + ch[l], ch[l], 3);
    add_conv(dec_name(l) + ".conv2", ch[l], ch[l], 3);
    layer_channels_[dec_name(l)] = ch[l];
  }
  add_conv("head", ch[0], config_.class_count, 1);

  for (const auto& tap : config_.resolved_taps()) {
    const std::size_t c = layer_channels_.at(tap);
    add_parameter(tap + ".fsr.gate.weight", {2, 2 * c});
    add_parameter(tap + ".fsr.gate.bias", {2});
    (is_encoder_layer(tap) ? encoder_taps_ : decoder_taps_).push_back(tap);
  }
  for (Pathway p : {Pathway::kEncoder, Pathway::kDecoder}) {
    const std::size_t width = pathway_width(p);
    if (config_.fused_dim > width) {
      throw DimensionError("segnet: fused_dim " + std::to_string(config_.fused_dim) + " exceeds " +
                           to_string(p) + " concat width " + std::to_string(width));
    }
    add_parameter(fusion_weight_id(p), {config_.fused_dim, width});
    add_parameter(fusion_bias_id(p), {config_.fused_dim});
  }
}

std::string SegNet::fusion_weight_id(Pathway p) { return std::string("fusion.") + to_string(p) + ".weight"; }
std::string SegNet::fusion_bias_id(Pathway p) { return std::string("fusion.") + to_string(p) + ".bias"; }

std::size_t SegNet::tap_channels(const std::string& tap) const { return layer_channels_.at(tap); }

std::size_t SegNet::pathway_width(Pathway p) const {
  std::size_t w = 0;
  for (const auto& t : pathway_taps(p)) w += tap_channels(t);
  return w;
}

void SegNet::add_parameter(const std::string& id, Shape shape) {
  params_.emplace(id, Parameter(id, Tensor::zeros(std::move(shape))));
}

void SegNet::add_conv(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k) {
  add_parameter(prefix + ".weight", {out, in, k, k});
  add_parameter(prefix + ".bias", {out});
}

void SegNet::init_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Identifier order is fixed by std::map, so the draw sequence is too.
  for (auto& [id, p] : params_) {
    const bool is_weight = id.size() > 7 && id.compare(id.size() - 7, 7, ".weight") == 0;
    const bool is_gate = id.find(".fsr.gate.") != std::string::npos;
    if (!is_weight || is_gate) {
      p.value.fill(Real{0});
    } else {
      const std::size_t fan_in = p.value.size() / p.value.extent(0);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : p.value.data()) v = static_cast<Real>(dist(rng));
    }
    p.zero_grad();
  }
}

Var SegNet::Bound::operator[](const std::string& id) const {
  auto it = vars_.find(id);
  if (it == vars_.end()) throw ContractError("segnet: unknown parameter '" + id + "'");
  return it->second;
}

SegNet::Bound SegNet::bind(Tape& tape, bool trainable) {
  Bound b;
  b.tape_ = &tape;
  for (auto& [id, p] : params_) {
    b.vars_.emplace(id, trainable ? tape.parameter(p) : tape.constant(p.value));
  }
  return b;
}

Var SegNet::block(const Bound& b, const std::string& name, Var x, TapBundle& taps) const {
  const Real slope = config_.leaky_slope;
  Var h = ops::conv2d(x, b[name + ".conv1.weight"], b[name + ".conv1.bias"], 1, 1);
  h = ops::leaky_relu(ops::instance_norm(h), slope);
  h = ops::conv2d(h, b[name + ".conv2.weight"], b[name + ".conv2.bias"], 1, 1);
  const auto& siblings = is_encoder_layer(name) ? encoder_taps_ : decoder_taps_;
  const bool tapped = std::find(siblings.begin(), siblings.end(), name) != siblings.end();
  if (tapped && config_.fsr_enabled) {
    h = spectral::fsr_forward(h, spectral::StyleGate{b[name + ".fsr.gate.weight"], b[name + ".fsr.gate.bias"]});
  }
  h = ops::leaky_relu(ops::instance_norm(h), slope);
  if (tapped) taps.emplace(name, h);
  return h;
}

SegNetOutput SegNet::forward(const Bound& bound, const Tensor& image) const {
  if (image.rank() != 3 || image.extent(0) != config_.input_channels) {
    throw DimensionError("segnet: expected image [" + std::to_string(config_.input_channels) + ",H,W], got " +
                         shape_string(image.shape()));
  }
  const std::size_t levels = config_.levels();
  const std::size_t factor = std::size_t{1} << (levels - 1);
  if (image.extent(1) % factor != 0 || image.extent(2) % factor != 0) {
    throw DimensionError("segnet: spatial size " + shape_string(image.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  SegNetOutput out;
  Tape& tape = bound.tape();
  Var x = tape.constant(image);
  std::vector<Var> skips;
  for (std::size_t l = 0; l < levels; ++l) {
    if (l > 0) x = ops::maxpool2x(x);
    x = block(bound, enc_name(l), x, out.taps);
    skips.push_back(x);
  }
  for (std::size_t l = levels - 1; l-- > 0;) {
    x = ops::concat_channels(ops::nearest_upsample2x(x), skips[l]);
    x = block(bound, dec_name(l), x, out.taps);
  }
  out.logits = ops::conv2d(x, bound["head.weight"], bound["head.bias"], 1, 0);
  return out;
}

}  // namespace fedbcs
