#include "fedbcs/prototypes.hpp"

#include "fedbcs/errors.hpp"
#include "fedbcs/ops.hpp"

namespace fedbcs {

const Prototype* ClientPrototypes::find(int class_id, Pathway p) const {
  for (const auto& proto : prototypes) {
    if (proto.class_id == class_id && proto.pathway == p) return &proto;
  }
  return nullptr;
}

namespace {

LabelMap labels_for(const Tensor& feature, const LabelMap& labels) {
  if (feature.rank() != 3) throw DimensionError("class_masked_mean: feature must be [C,h,w]");
  return downsample_nearest(labels, feature.extent(1), feature.extent(2));
}

}  // namespace

std::optional<Var> class_masked_mean(Var feature, const LabelMap& labels, int class_id) {
  const Tensor& f = feature.value();
  const LabelMap mask = labels_for(f, labels);
  const auto cls = static_cast<std::uint8_t>(class_id);
  const std::size_t c = f.extent(0);
  const std::size_t plane = mask.size();
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < plane; ++i) {
    if (mask.values[i] == cls) hits.push_back(i);
  }
  if (hits.empty()) return std::nullopt;

  const Real inv = Real{1} / static_cast<Real>(hits.size());
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    Real s = 0;
    for (auto i : hits) s += f[ch * plane + i];
    out[ch] = s * inv;
  }
  return feature.tape().record(
      std::move(out), {feature},
      [feature, hits = std::move(hits), inv, c, plane](Tape& tape, const Tensor& g) {
        Tensor& gf = tape.grad_buffer(feature);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (auto i : hits) gf[ch * plane + i] += g[ch] * inv;
      },
      "class_masked_mean");
}

Var hierarchical_concat(Var shallow, Var deep) { return ops::concat_channels(shallow, deep); }

Var fuse(Var concatenated, Var weight, Var bias) { return ops::linear(concatenated, weight, bias); }

SampleEmbedding embed_sample(const SegNet& net, const SegNet::Bound& bound, const TapBundle& taps,
                             const LabelMap& labels) {
  SampleEmbedding out;
  const int classes = static_cast<int>(net.config().class_count);
  for (int cls = 0; cls < classes; ++cls) {
    ClassEmbedding emb;
    for (Pathway p : {Pathway::kEncoder, Pathway::kDecoder}) {
      std::optional<Var> chain;
      bool complete = true;
      for (const auto& tap : net.pathway_taps(p)) {
        auto mean = class_masked_mean(taps.at(tap), labels, cls);
        if (!mean) {
          complete = false;
          break;
        }
        chain = chain ? hierarchical_concat(*chain, *mean) : *mean;
      }
      if (!complete) continue;
      Var fused = fuse(*chain, bound[SegNet::fusion_weight_id(p)], bound[SegNet::fusion_bias_id(p)]);
      (p == Pathway::kEncoder ? emb.encoder : emb.decoder) = fused;
    }
    if (emb.encoder || emb.decoder) out.emplace(cls, emb);
  }
  return out;
}

PrototypeAccumulator::PrototypeAccumulator(const SegNet& net)
    : class_count_(net.config().class_count), full_res_support_(net.config().class_count, 0) {
  for (Pathway p : {Pathway::kEncoder, Pathway::kDecoder}) {
    for (const auto& tap : net.pathway_taps(p)) {
      std::vector<Slot> per_class(class_count_);
      for (auto& s : per_class) s.sum = Tensor::zeros({net.tap_channels(tap)});
      slots_.emplace(tap, std::move(per_class));
    }
  }
}

void PrototypeAccumulator::add(const TapBundle& taps, const LabelMap& labels) {
  for (auto& [tap, per_class] : slots_) {
    const Tensor& f = taps.at(tap).value();
    const LabelMap mask = labels_for(f, labels);
    const std::size_t plane = mask.size();
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t cls = mask.values[i];
      if (cls >= class_count_) throw DimensionError("prototype accumulator: label out of range");
      Slot& slot = per_class[cls];
      for (std::size_t ch = 0; ch < slot.sum.size(); ++ch) slot.sum[ch] += f[ch * plane + i];
      ++slot.count;
    }
  }
  for (std::size_t cls = 0; cls < class_count_; ++cls) {
    full_res_support_[cls] += labels.count(static_cast<std::uint8_t>(cls));
  }
}

ClientPrototypes PrototypeAccumulator::finalize(const SegNet& net) const {
  ClientPrototypes out;
  const auto& params = net.parameters();
  for (std::size_t cls = 0; cls < class_count_; ++cls) {
    for (Pathway p : {Pathway::kEncoder, Pathway::kDecoder}) {
      std::vector<Real> concat;
      bool complete = true;
      for (const auto& tap : net.pathway_taps(p)) {
        const Slot& slot = slots_.at(tap)[cls];
        if (slot.count == 0) {
          complete = false;
          break;
        }
        for (auto v : slot.sum.data()) concat.push_back(v / static_cast<Real>(slot.count));
      }
      if (!complete) continue;
      const Tensor& w = params.at(SegNet::fusion_weight_id(p)).value;
      const Tensor& b = params.at(SegNet::fusion_bias_id(p)).value;
      const std::size_t d = w.extent(0), n = w.extent(1);
      Tensor fused({d});
      for (std::size_t o = 0; o < d; ++o) {
        Real s = b[o];
        for (std::size_t i = 0; i < n; ++i) s += w[o * n + i] * concat[i];
        fused[o] = s;
      }
      out.prototypes.push_back(Prototype{static_cast<int>(cls), p, std::move(fused), full_res_support_[cls]});
    }
  }
  return out;
}

ClientPrototypes build_client_prototypes(SegNet& net, std::span<const Sample> samples) {
  if (samples.empty()) throw ContractError("build_client_prototypes: no samples");
  PrototypeAccumulator acc(net);
  for (const Sample& s : samples) {
    Tape tape;
    auto bound = net.bind(tape, /*trainable=*/false);
    auto out = net.forward(bound, s.image);
    acc.add(out.taps, s.labels);
  }
  return acc.finalize(net);
}

}  // namespace fedbcs
