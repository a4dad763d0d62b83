#pragma once

#include <optional>
#include <span>

#include "fedbcs/autodiff.hpp"
#include "fedbcs/dataset.hpp"
#include "fedbcs/prototypes.hpp"
#include "fedbcs/server.hpp"

namespace fedbcs {

struct LossWeights {
  Real lambda_c = 1;  // weight on contrastive + consistency terms
  Real tau = Real(0.4);

  void validate() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline constexpr Real kDiceEps = Real(1e-5);

/// Soft Dice over softmax probabilities, averaged over foreground classes
/// (1..c-1): 1 - (2 sum p g + eps) / (sum p + sum g + eps).
Var dice_loss(Var logits, const LabelMap& labels);

/// InfoNCE with Sim = cosine / tau:
///   -log( sum_pos e^Sim / (sum_pos e^Sim + sum_neg e^Sim) ).
/// Log-sum-exp stabilized. Exactly 0 without negatives. At least one
/// positive.
Var contra_loss(Var anchor, std::span<const Var> positives, std::span<const Var> negatives, Real tau);

/// sum_v (a_v - b_v)^2 -> [1].
Var squared_distance(Var a, Var b);

/// ||e_enc - mean_enc||^2 + ||e_dec - mean_dec||^2 for one class.
Var consis_loss(Var e_enc, Var e_dec, Var mean_enc, Var mean_dec);

struct AlignmentTerms {
  std::optional<Var> contra;
  std::optional<Var> consis;
};

/// Prototype terms of one sample against the broadcast prototype set.
/// Contrastive: mean over (class, pathway) anchors with a global positive
/// set; negatives are same-pathway representatives of the other classes.
/// Consistency: mean over classes with at least one anchor/mean pair, using
/// whichever pathways are available. Terms without any contribution stay
/// empty.
AlignmentTerms alignment_losses(Tape& tape, const SampleEmbedding& embedding, const GlobalPrototypeSet& global,
                                Real tau);

/// dice + lambda_c * (contra + consis); absent terms count as 0 and
/// lambda_c == 0 drops them from the graph.
Var total_loss(Var dice, const AlignmentTerms& terms, Real lambda_c);

}  // namespace fedbcs
