#pragma once

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fedbcs/dataset.hpp"
#include "fedbcs/segnet.hpp"

namespace fedbcs {

/// Fused class prototype of one pathway, as uploaded by a client.
struct Prototype {
  int class_id = 0;
  Pathway pathway = Pathway::kEncoder;
  Tensor vector;            // [d_fused]
  std::size_t support = 0;  // full-resolution pixels of the class behind it
};

struct ClientPrototypes {
  std::vector<Prototype> prototypes;

  const Prototype* find(int class_id, Pathway p) const;
  std::size_t upload_count() const { return prototypes.size(); }
};

/// Mean feature vector over locations whose label (resampled to the
/// feature's resolution) equals class_id. nullopt when the class has no
/// support at that resolution.
std::optional<Var> class_masked_mean(Var feature, const LabelMap& labels, int class_id);

/// Concat(shallow, deep) along channels, fixed order.
Var hierarchical_concat(Var shallow, Var deep);

/// Linear projection into the fused prototype space.
Var fuse(Var concatenated, Var weight, Var bias);

/// Per-class anchors of one sample in the fused space, with gradients to
/// the model. A pathway entry is absent when the class is missing at any of
/// that pathway's taps.
struct ClassEmbedding {
  std::optional<Var> encoder;
  std::optional<Var> decoder;

  const std::optional<Var>& get(Pathway p) const { return p == Pathway::kEncoder ? encoder : decoder; }
};
using SampleEmbedding = std::map<int, ClassEmbedding>;

SampleEmbedding embed_sample(const SegNet& net, const SegNet::Bound& bound, const TapBundle& taps,
                             const LabelMap& labels);

/// Accumulates class-masked feature sums and counts per tap across forward
/// passes, then fuses the pooled means once. Pooling sums before fusing
/// makes the result independent of how samples were batched.
class PrototypeAccumulator {
 public:
  explicit PrototypeAccumulator(const SegNet& net);

  /// Reads tap values only; nothing is recorded for backward.
  void add(const TapBundle& taps, const LabelMap& labels);

  /// Prototypes for every (class, pathway) with support at all of the
  /// pathway's taps, fused with the net's current fusion heads.
  ClientPrototypes finalize(const SegNet& net) const;

 private:
  struct Slot {
    Tensor sum;
    std::size_t count = 0;
  };
  std::size_t class_count_;
  std::map<std::string, std::vector<Slot>> slots_;  // tap -> per class
  std::vector<std::size_t> full_res_support_;
};

/// Forward passes over `samples` (no gradients) and accumulation into
/// client prototypes. `samples` must be nonempty.
ClientPrototypes build_client_prototypes(SegNet& net, std::span<const Sample> samples);

}  // namespace fedbcs
