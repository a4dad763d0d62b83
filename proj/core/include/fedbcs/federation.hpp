#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedbcs/losses.hpp"
#include "fedbcs/optimizer.hpp"
#include "fedbcs/prototypes.hpp"
#include "fedbcs/segnet.hpp"
#include "fedbcs/server.hpp"
#include "fedbcs/synthdata.hpp"
#include "fedbcs/theory.hpp"

namespace fedbcs {

/// Ablation wiring.
///   fedbcs         FSR on,  prototype losses on
///   fedavg         FSR off, no prototypes at all
///   fedbcs-no-fsr  FSR off, prototype losses on
///   fedbcs-no-cdpa FSR on,  no prototypes at all
enum class Method { kFedBcs, kFedAvg, kFedBcsNoFsr, kFedBcsNoCdpa };

const char* to_string(Method m);
/// Throws ConfigError on an unknown name.
Method parse_method(const std::string& name);
bool uses_fsr(Method m);
bool uses_prototypes(Method m);

struct FederationConfig {
  std::size_t clients = 4;       // M
  std::size_t rounds = 60;       // T
  std::size_t local_epochs = 1;
  std::size_t batch_size = 6;
  OptimizerConfig optimizer;
  LossWeights loss;
  std::uint64_t seed = 0;
  Method method = Method::kFedBcs;
  SegNetConfig net;
  ServerOptions server;
  /// Worker threads for client training; results do not depend on it.
  std::size_t parallelism = 1;
  /// Evaluate every k rounds (the last round always); 0 = last round only.
  std::size_t eval_every = 1;
  /// Record the quantities the descent check needs (costs one extra
  /// full-batch pass per client and round).
  bool theory_monitor = false;
  bool augment = false;  // random flips and 90 degree rotations of training samples

  void validate() const;
  /// Effective lambda_c: 0 for methods without prototypes.
  Real effective_lambda_c() const;

  friend bool operator==(const FederationConfig&, const FederationConfig&) = default;
};

struct ClientState {
  int client_id = 0;
  const std::vector<Sample>* train = nullptr;
  std::size_t sample_count = 0;  // N_m
  SegNet model;

  ClientState(int id, const std::vector<Sample>& data, SegNetConfig net);
};

/// Stream for (seed, client, round).
std::mt19937_64 client_rng(std::uint64_t seed, int client_id, std::size_t round);

struct ClientRoundStats {
  int client_id = 0;
  Real dice = 0;  // means over the samples seen in local training
  Real contra = 0;
  Real consis = 0;
  Real total = 0;
  Real grad_sq_norm = 0;  // mean squared minibatch gradient norm
  std::size_t uploads = 0;
  std::size_t steps = 0;
  Real minibatch_variance = 0;  // monitor only
  Real prototype_norm_max = 0;
};

struct LocalResult {
  NamedTensors params;
  ClientPrototypes prototypes;
  ClientRoundStats stats;
};

/// E epochs of minibatch training of the total loss from `global`, then
/// prototypes pooled over the final epoch. `prototypes` null or empty
/// means dice only. Deterministic given the client stream.
LocalResult local_train(ClientState& client, const NamedTensors& global, const GlobalPrototypeSet* prototypes,
                        const FederationConfig& config, std::size_t round);

/// Loss of one sample under the configured objective, recorded on `tape`.
struct SampleLoss {
  Var total;
  Var dice;
  std::optional<Var> contra;
  std::optional<Var> consis;
  TapBundle taps;
};
SampleLoss sample_loss(Tape& tape, SegNet& model, const Sample& sample, const GlobalPrototypeSet* prototypes,
                       const FederationConfig& config, bool trainable = true);

/// Hard-argmax foreground Dice of one prediction, averaged over foreground
/// classes; an empty prediction of an empty class scores 1.
Real hard_dice(const Tensor& logits, const LabelMap& labels);

/// Mean hard Dice per test set.
std::vector<Real> evaluate(SegNet& model, std::span<const std::vector<Sample>> test_sets);

struct ServerState {
  NamedTensors global;
  GlobalPrototypeSet prototypes;
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<ClientRoundStats> clients;
  std::vector<Real> domain_dice;  // empty if not evaluated this round
  Real avg_dice = 0;
  bool evaluated = false;
  std::size_t total_uploads = 0;
  std::optional<bool> descent_ok;  // filled in after the run when monitoring
  std::vector<ClientPrototypes> uploads;  // per client, ascending id
  GlobalPrototypeSet broadcast;           // server output of this round
};

/// One communication round: local training of every client from the
/// current global state, then aggregation and clustering. Updates `server`.
RoundReport run_round(std::size_t t, std::vector<ClientState>& clients, ServerState& server,
                      const FederationConfig& config, TheoryTrace* trace = nullptr);

struct ExperimentResult {
  std::vector<RoundReport> reports;
  NamedTensors final_params;
  TheoryTrace trace;  // monitor only: one entry per round plus the final model
  std::optional<TheoryParams> theory;
  std::optional<DescentReport> descent;
};

/// Called after each round with the report and the new global parameters.
using RoundObserver = std::function<void(const RoundReport&, const NamedTensors&)>;

/// Full run over `data` (one domain per client).
ExperimentResult run_experiment(const FederationConfig& config, const std::vector<DomainData>& data,
                                const RoundObserver& observer = {});

/// Weighted full-batch objective and gradient at `global`, with the round's
/// prototypes. Fills objective, grad_sq_norm, params and gradient.
TheoryObservation observe_global(std::vector<ClientState>& clients, const NamedTensors& global,
                                 const GlobalPrototypeSet& prototypes, const FederationConfig& config);

/// Flattened values in identifier order.
std::vector<Real> flatten(const NamedTensors& values);

}  // namespace fedbcs
