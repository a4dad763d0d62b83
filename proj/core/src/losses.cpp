#include "fedbcs/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fedbcs/errors.hpp"
#include "fedbcs/ops.hpp"

namespace fedbcs {

void LossWeights::validate() const {
  if (!(tau > 0)) throw ContractError("loss weights: tau must be positive");
  if (!(lambda_c >= 0)) throw ContractError("loss weights: lambda_c must be nonnegative");
}

Var dice_loss(Var logits, const LabelMap& labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 3 || z.extent(1) != labels.height || z.extent(2) != labels.width) {
    throw DimensionError("dice_loss: logits " + shape_string(z.shape()) + " vs labels " +
                         std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  const std::size_t c = z.extent(0);
  const std::size_t n = labels.size();
  if (c < 2) throw DimensionError("dice_loss: need at least two classes");

  Tensor probs(z.shape());
  for (std::size_t i = 0; i < n; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, z[k * n + i]);
    Real denom = 0;
    for (std::size_t k = 0; k < c; ++k) {
      probs[k * n + i] = std::exp(z[k * n + i] - mx);
      denom += probs[k * n + i];
    }
    for (std::size_t k = 0; k < c; ++k) probs[k * n + i] /= denom;
  }

  // Per foreground class: intersection, prediction mass, label mass.
  std::vector<Real> inter(c, 0), pred(c, 0), truth(c, 0);
  for (std::size_t k = 1; k < c; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const Real p = probs[k * n + i];
      const bool g = labels.values[i] == k;
      pred[k] += p;
      if (g) {
        inter[k] += p;
        truth[k] += 1;
      }
    }
  }
  const Real fg = static_cast<Real>(c - 1);
  Real mean_dice = 0;
  for (std::size_t k = 1; k < c; ++k) mean_dice += (2 * inter[k] + kDiceEps) / (pred[k] + truth[k] + kDiceEps);
  mean_dice /= fg;

  return logits.tape().record(
      Tensor::scalar(Real{1} - mean_dice), {logits},
      [logits, probs = std::move(probs), inter, pred, truth, labels, c, n, fg](Tape& tape, const Tensor& g) {
        const Real go = g[0];
        // dL/dp_k(x), zero for the background class.
        Tensor dp(probs.shape());
        for (std::size_t k = 1; k < c; ++k) {
          const Real den = pred[k] + truth[k] + kDiceEps;
          const Real num = 2 * inter[k] + kDiceEps;
          for (std::size_t i = 0; i < n; ++i) {
            const Real gk = labels.values[i] == k ? Real{1} : Real{0};
            dp[k * n + i] = -go / fg * (2 * gk * den - num) / (den * den);
          }
        }
        Tensor& gz = tape.grad_buffer(logits);
        for (std::size_t i = 0; i < n; ++i) {
          Real dot = 0;
          for (std::size_t k = 0; k < c; ++k) dot += probs[k * n + i] * dp[k * n + i];
          for (std::size_t k = 0; k < c; ++k) gz[k * n + i] += probs[k * n + i] * (dp[k * n + i] - dot);
        }
      },
      "dice_loss");
}

namespace {

struct CosineTerms {
  Real cos = 0;
  Real norm_a = 0;
  Real norm_b = 0;
};

CosineTerms cosine_terms(const Tensor& a, const Tensor& b) {
  CosineTerms t;
  t.norm_a = a.norm();
  t.norm_b = b.norm();
  if (t.norm_a > 0 && t.norm_b > 0) t.cos = a.dot(b) / (t.norm_a * t.norm_b);
  return t;
}

// d cos(a, b) / d a, scaled by `factor`, added into `out`.
void add_cosine_grad(Tensor& out, const Tensor& a, const Tensor& b, const CosineTerms& t, Real factor) {
  if (t.norm_a == 0 || t.norm_b == 0) return;
  const Real inv_ab = Real{1} / (t.norm_a * t.norm_b);
  const Real self = t.cos / (t.norm_a * t.norm_a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += factor * (b[i] * inv_ab - a[i] * self);
}

Real log_sum_exp(const std::vector<Real>& s, std::size_t begin, std::size_t end) {
  Real mx = -std::numeric_limits<Real>::infinity();
  for (std::size_t j = begin; j < end; ++j) mx = std::max(mx, s[j]);
  Real acc = 0;
  for (std::size_t j = begin; j < end; ++j) acc += std::exp(s[j] - mx);
  return mx + std::log(acc);
}

}  // namespace

Var contra_loss(Var anchor, std::span<const Var> positives, std::span<const Var> negatives, Real tau) {
  if (positives.empty()) throw ContractError("contra_loss: empty positive set");
  if (!(tau > 0)) throw ContractError("contra_loss: tau must be positive");
  Tape& tape = anchor.tape();

  std::vector<Var> reps(positives.begin(), positives.end());
  reps.insert(reps.end(), negatives.begin(), negatives.end());
  const std::size_t n_pos = positives.size();
  const std::size_t n_all = reps.size();

  std::vector<CosineTerms> terms;
  std::vector<Real> sim;
  for (const Var& r : reps) {
    require_same_shape(anchor.value(), r.value(), "contra_loss");
    terms.push_back(cosine_terms(anchor.value(), r.value()));
    sim.push_back(terms.back().cos / tau);
  }
  if (negatives.empty()) {
    return tape.constant(Tensor::scalar(Real{0}));
  }
  const Real lse_all = log_sum_exp(sim, 0, n_all);
  const Real lse_pos = log_sum_exp(sim, 0, n_pos);

  std::vector<Var> inputs{anchor};
  inputs.insert(inputs.end(), reps.begin(), reps.end());
  return tape.record(
      Tensor::scalar(lse_all - lse_pos), inputs,
      [anchor, reps, terms, sim, lse_all, lse_pos, n_pos, tau](Tape& t, const Tensor& g) {
        const Tensor& a = anchor.value();
        const bool anchor_grad = t.requires_grad(anchor);
        Tensor ga = Tensor::zeros(a.shape());
        for (std::size_t j = 0; j < reps.size(); ++j) {
          // dL/dSim_j = softmax_all_j - [j positive] softmax_pos_j
          Real ds = std::exp(sim[j] - lse_all);
          if (j < n_pos) ds -= std::exp(sim[j] - lse_pos);
          const Real factor = g[0] * ds / tau;
          const Tensor& r = reps[j].value();
          if (anchor_grad) add_cosine_grad(ga, a, r, terms[j], factor);
          if (t.requires_grad(reps[j])) {
            Tensor gr = Tensor::zeros(r.shape());
            CosineTerms swapped{terms[j].cos, terms[j].norm_b, terms[j].norm_a};
            add_cosine_grad(gr, r, a, swapped, factor);
            t.accumulate(reps[j], gr);
          }
        }
        if (anchor_grad) t.accumulate(anchor, ga);
      },
      "contra_loss");
}

Var squared_distance(Var a, Var b) {
  Var d = ops::sub(a, b);
  return ops::sum(ops::mul(d, d));
}

Var consis_loss(Var e_enc, Var e_dec, Var mean_enc, Var mean_dec) {
  return ops::add(squared_distance(e_enc, mean_enc), squared_distance(e_dec, mean_dec));
}

AlignmentTerms alignment_losses(Tape& tape, const SampleEmbedding& embedding, const GlobalPrototypeSet& global,
                                Real tau) {
  std::vector<Var> contra_terms;
  std::vector<Var> consis_terms;
  for (const auto& [cls, emb] : embedding) {
    std::vector<Var> class_consis;
    for (Pathway p : {Pathway::kEncoder, Pathway::kDecoder}) {
      const auto& anchor = emb.get(p);
      if (!anchor) continue;
      const GlobalClassPrototypes* own = global.find(cls, p);
      if (own == nullptr) continue;
      std::vector<Var> pos, neg;
      for (const auto& r : own->representatives) pos.push_back(tape.constant(r));
      for (const auto& [key, other] : global.entries) {
        if (key.second != p || key.first == cls) continue;
        for (const auto& r : other.representatives) neg.push_back(tape.constant(r));
      }
      contra_terms.push_back(contra_loss(*anchor, pos, neg, tau));
      class_consis.push_back(squared_distance(*anchor, tape.constant(own->mean)));
    }
    if (!class_consis.empty()) {
      consis_terms.push_back(class_consis.size() == 1 ? class_consis.front() : ops::add_n(class_consis));
    }
  }
  AlignmentTerms out;
  if (!contra_terms.empty()) out.contra = ops::mean_scalars(contra_terms);
  if (!consis_terms.empty()) out.consis = ops::mean_scalars(consis_terms);
  return out;
}

Var total_loss(Var dice, const AlignmentTerms& terms, Real lambda_c) {
  if (lambda_c == 0 || (!terms.contra && !terms.consis)) return dice;
  Var proto = terms.contra && terms.consis ? ops::add(*terms.contra, *terms.consis)
                                           : (terms.contra ? *terms.contra : *terms.consis);
  return ops::add(dice, ops::scale(proto, lambda_c));
}

}  // namespace fedbcs
