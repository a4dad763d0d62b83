#include "fedbcs/federation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "fedbcs/errors.hpp"
#include "fedbcs/ops.hpp"
#include "fedbcs/rng.hpp"

namespace fedbcs {

const char* to_string(Method m) {
  switch (m) {
    case Method::kFedBcs:
      return "fedbcs";
    case Method::kFedAvg:
      return "fedavg";
    case Method::kFedBcsNoFsr:
      return "fedbcs-no-fsr";
    case Method::kFedBcsNoCdpa:
      return "fedbcs-no-cdpa";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kFedBcs, Method::kFedAvg, Method::kFedBcsNoFsr, Method::kFedBcsNoCdpa}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + name + "' (expected fedbcs, fedavg, fedbcs-no-fsr, fedbcs-no-cdpa)");
}

bool uses_fsr(Method m) { return m == Method::kFedBcs || m == Method::kFedBcsNoCdpa; }
bool uses_prototypes(Method m) { return m == Method::kFedBcs || m == Method::kFedBcsNoFsr; }

void FederationConfig::validate() const {
  if (clients == 0) throw ConfigError("clients must be >= 1");
  if (rounds == 0) throw ConfigError("rounds must be >= 1");
  if (local_epochs == 0) throw ConfigError("local_epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (optimizer.weight_decay < 0) throw ConfigError("weight_decay must be nonnegative");
  if (!(loss.tau > 0)) throw ConfigError("tau must be positive");
  if (!(loss.lambda_c >= 0)) throw ConfigError("lambda_c must be nonnegative");
  if (parallelism == 0) throw ConfigError("parallelism must be >= 1");
  if (server.finch_level == 0) throw ConfigError("finch_level must be >= 1");
  try {
    net.validate();
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
}

Real FederationConfig::effective_lambda_c() const { return uses_prototypes(method) ? loss.lambda_c : Real{0}; }

ClientState::ClientState(int id, const std::vector<Sample>& data, SegNetConfig net)
    : client_id(id), train(&data), sample_count(data.size()), model(std::move(net)) {
  if (sample_count == 0) throw ContractError("client " + std::to_string(id) + " has no training samples");
}

std::mt19937_64 client_rng(std::uint64_t seed, int client_id, std::size_t round) {
  return std::mt19937_64(mix_seed({seed, static_cast<std::uint64_t>(client_id), round}));
}

namespace {

bool prototypes_active(const GlobalPrototypeSet* prototypes, const FederationConfig& config) {
  return prototypes != nullptr && !prototypes->empty() && config.effective_lambda_c() > 0;
}

std::vector<Real> flatten_gradients(const ParameterStore& params) {
  std::vector<Real> out;
  for (const auto& [id, p] : params) out.insert(out.end(), p.gradient.data().begin(), p.gradient.data().end());
  return out;
}

Real squared_norm(const std::vector<Real>& v) {
  Real s = 0;
  for (Real x : v) s += x * x;
  return s;
}

// Mean squared distance of the batch gradients from their mean.
Real gradient_dispersion(const std::vector<std::vector<Real>>& grads) {
  if (grads.size() < 2) return 0;
  std::vector<Real> mean(grads.front().size(), 0);
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i];
  for (Real& m : mean) m /= static_cast<Real>(grads.size());
  Real acc = 0;
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size(); ++i) acc += (g[i] - mean[i]) * (g[i] - mean[i]);
  return acc / static_cast<Real>(grads.size());
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
// rethrown in index order after all workers finish.
template <class Fn>
void for_each_client(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

SampleLoss sample_loss(Tape& tape, SegNet& model, const Sample& sample, const GlobalPrototypeSet* prototypes,
                       const FederationConfig& config, bool trainable) {
  auto bound = model.bind(tape, trainable);
  auto out = model.forward(bound, sample.image);
  SampleLoss l;
  l.dice = dice_loss(out.logits, sample.labels);
  AlignmentTerms terms;
  if (prototypes_active(prototypes, config)) {
    const auto embedding = embed_sample(model, bound, out.taps, sample.labels);
    terms = alignment_losses(tape, embedding, *prototypes, config.loss.tau);
  }
  l.contra = terms.contra;
  l.consis = terms.consis;
  l.total = total_loss(l.dice, terms, config.effective_lambda_c());
  l.taps = std::move(out.taps);
  return l;
}

LocalResult local_train(ClientState& client, const NamedTensors& global, const GlobalPrototypeSet* prototypes,
                        const FederationConfig& config, std::size_t round) {
  SegNet& model = client.model;
  ParameterStore& params = model.parameters();
  load(params, global);
  Optimizer opt(config.optimizer);
  auto rng = client_rng(config.seed, client.client_id, round);
  const auto& data = *client.train;
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  LocalResult result;
  ClientRoundStats& stats = result.stats;
  stats.client_id = client.client_id;
  const bool build_prototypes = uses_prototypes(config.method);
  std::optional<PrototypeAccumulator> acc;
  std::size_t seen = 0;

  for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const bool final_epoch = epoch + 1 == config.local_epochs;
    if (final_epoch && build_prototypes) acc.emplace(model);
    std::vector<std::vector<Real>> batch_grads;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const Real inv_batch = Real{1} / static_cast<Real>(stop - start);
      zero_grads(params);
      try {
        for (std::size_t k = start; k < stop; ++k) {
          const Sample& raw = data[order[k]];
          const Sample sample = config.augment ? augment(raw, rng) : raw;
          Tape tape;
          SampleLoss l = sample_loss(tape, model, sample, prototypes, config);
          const Real total = l.total.value()[0];
          if (!std::isfinite(total)) throw NumericalError("non-finite loss");
          tape.backward(ops::scale(l.total, inv_batch));
          stats.dice += l.dice.value()[0];
          stats.contra += l.contra ? l.contra->value()[0] : Real{0};
          stats.consis += l.consis ? l.consis->value()[0] : Real{0};
          stats.total += total;
          ++seen;
          if (acc) acc->add(l.taps, sample.labels);
        }
        auto grads = flatten_gradients(params);
        if (checked_mode()) {
          for (Real g : grads) {
            if (!std::isfinite(g)) throw NumericalError("non-finite gradient");
          }
        }
        stats.grad_sq_norm += squared_norm(grads);
        if (config.theory_monitor) batch_grads.push_back(std::move(grads));
      } catch (const TrainingError&) {
        throw;
      } catch (const NumericalError& e) {
        throw TrainingError("round " + std::to_string(round) + " client " + std::to_string(client.client_id) +
                            " epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) + ": " +
                            e.what());
      }
      opt.step(params);
    }
    if (config.theory_monitor) {
      stats.minibatch_variance = std::max(stats.minibatch_variance, gradient_dispersion(batch_grads));
    }
  }

  stats.steps = opt.steps();
  const Real inv_seen = Real{1} / static_cast<Real>(seen);
  stats.dice *= inv_seen;
  stats.contra *= inv_seen;
  stats.consis *= inv_seen;
  stats.total *= inv_seen;
  stats.grad_sq_norm /= static_cast<Real>(stats.steps);
  if (acc) result.prototypes = acc->finalize(model);
  stats.uploads = result.prototypes.upload_count();
  for (const auto& p : result.prototypes.prototypes) {
    stats.prototype_norm_max = std::max(stats.prototype_norm_max, p.vector.norm());
  }
  result.params = snapshot(params);
  return result;
}

Real hard_dice(const Tensor& logits, const LabelMap& labels) {
  if (logits.rank() != 3 || logits.extent(1) != labels.height || logits.extent(2) != labels.width) {
    throw DimensionError("hard_dice: logits " + shape_string(logits.shape()) + " do not match labels");
  }
  const std::size_t c = logits.extent(0), n = labels.size();
  std::vector<std::uint8_t> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (logits[k * n + i] > logits[best * n + i]) best = k;
    }
    pred[i] = static_cast<std::uint8_t>(best);
  }
  Real total = 0;
  for (std::size_t k = 1; k < c; ++k) {
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pk = pred[i] == k, gk = labels.values[i] == k;
      p += pk;
      g += gk;
      both += pk && gk;
    }
    total += p + g == 0 ? Real{1} : Real(2 * both) / static_cast<Real>(p + g);
  }
  return total / static_cast<Real>(c - 1);
}

std::vector<Real> evaluate(SegNet& model, std::span<const std::vector<Sample>> test_sets) {
  std::vector<Real> out;
  for (const auto& set : test_sets) {
    if (set.empty()) throw ContractError("evaluate: empty test set");
    Real acc = 0;
    for (const Sample& s : set) {
      Tape tape;
      auto bound = model.bind(tape, /*trainable=*/false);
      acc += hard_dice(model.forward(bound, s.image).logits.value(), s.labels);
    }
    out.push_back(acc / static_cast<Real>(set.size()));
  }
  return out;
}

std::vector<Real> flatten(const NamedTensors& values) {
  std::vector<Real> out;
  for (const auto& [id, t] : values) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

TheoryObservation observe_global(std::vector<ClientState>& clients, const NamedTensors& global,
                                 const GlobalPrototypeSet& prototypes, const FederationConfig& config) {
  std::vector<std::size_t> counts;
  for (const auto& c : clients) counts.push_back(c.sample_count);
  const auto weights = AggregationWeights::from_counts(counts);
  std::vector<Real> objective(clients.size(), 0);
  std::vector<std::vector<Real>> grads(clients.size());

  for_each_client(clients.size(), config.parallelism, [&](std::size_t m) {
    ClientState& client = clients[m];
    ParameterStore& params = client.model.parameters();
    load(params, global);
    zero_grads(params);
    const Real inv_n = Real{1} / static_cast<Real>(client.sample_count);
    for (const Sample& s : *client.train) {
      Tape tape;
      SampleLoss l = sample_loss(tape, client.model, s, &prototypes, config);
      objective[m] += l.total.value()[0] * inv_n;
      tape.backward(ops::scale(l.total, inv_n));
    }
    grads[m] = flatten_gradients(params);
  });

  TheoryObservation obs;
  obs.params = flatten(global);
  obs.gradient.assign(obs.params.size(), 0);
  for (std::size_t m = 0; m < clients.size(); ++m) {
    obs.objective += weights.values[m] * objective[m];
    for (std::size_t i = 0; i < obs.gradient.size(); ++i) obs.gradient[i] += weights.values[m] * grads[m][i];
  }
  obs.grad_sq_norm = squared_norm(obs.gradient);
  return obs;
}

RoundReport run_round(std::size_t t, std::vector<ClientState>& clients, ServerState& server,
                      const FederationConfig& config, TheoryTrace* trace) {
  if (clients.empty()) throw ContractError("run_round: no clients");
  if (trace != nullptr) {
    trace->push_back(observe_global(clients, server.global, server.prototypes, config));
    trace->back().round = t;
  }
  const GlobalPrototypeSet* broadcast = server.prototypes.empty() ? nullptr : &server.prototypes;
  std::vector<LocalResult> results(clients.size());
  for_each_client(clients.size(), config.parallelism, [&](std::size_t m) {
    results[m] = local_train(clients[m], server.global, broadcast, config, t);
  });

  RoundReport report;
  report.round = t;
  std::vector<ClientPrototypes> uploads;
  std::vector<NamedTensors> params;
  std::vector<std::size_t> counts;
  for (std::size_t m = 0; m < clients.size(); ++m) {
    report.clients.push_back(results[m].stats);
    report.total_uploads += results[m].stats.uploads;
    uploads.push_back(results[m].prototypes);
    params.push_back(std::move(results[m].params));
    counts.push_back(clients[m].sample_count);
  }
  if (trace != nullptr) {
    for (const auto& s : report.clients) {
      trace->back().minibatch_variance = std::max(trace->back().minibatch_variance, s.minibatch_variance);
      trace->back().prototype_norm_max = std::max(trace->back().prototype_norm_max, s.prototype_norm_max);
    }
  }
  auto server_result = run_server_round(uploads, params, counts, config.server);
  server.global = std::move(server_result.global_params);
  server.prototypes = std::move(server_result.prototypes);
  report.uploads = std::move(uploads);
  report.broadcast = server.prototypes;
  return report;
}

ExperimentResult run_experiment(const FederationConfig& config, const std::vector<DomainData>& data,
                                const RoundObserver& observer) {
  config.validate();
  if (data.size() != config.clients) {
    throw ConfigError("run_experiment: " + std::to_string(config.clients) + " clients but " +
                      std::to_string(data.size()) + " domains");
  }
  SegNetConfig net = config.net;
  net.fsr_enabled = uses_fsr(config.method);

  SegNet eval_model(net);
  eval_model.init_parameters(config.seed);
  ServerState server;
  server.global = snapshot(eval_model.parameters());

  std::vector<ClientState> clients;
  std::vector<std::vector<Sample>> test_sets;
  for (std::size_t m = 0; m < data.size(); ++m) {
    clients.emplace_back(static_cast<int>(m), data[m].train, net);
    test_sets.push_back(data[m].test);
  }

  ExperimentResult result;
  TheoryTrace* trace = config.theory_monitor ? &result.trace : nullptr;
  for (std::size_t t = 0; t < config.rounds; ++t) {
    RoundReport report = run_round(t, clients, server, config, trace);
    const bool last = t + 1 == config.rounds;
    if (last || (config.eval_every > 0 && (t + 1) % config.eval_every == 0)) {
      load(eval_model.parameters(), server.global);
      report.domain_dice = evaluate(eval_model, test_sets);
      report.avg_dice = std::accumulate(report.domain_dice.begin(), report.domain_dice.end(), Real{0}) /
                        static_cast<Real>(report.domain_dice.size());
      report.evaluated = true;
    }
    result.reports.push_back(std::move(report));
    if (observer) observer(result.reports.back(), server.global);
  }

  if (trace != nullptr) {
    trace->push_back(observe_global(clients, server.global, server.prototypes, config));
    trace->back().round = config.rounds;
    TheoryParams base;
    base.tau = config.loss.tau;
    base.lambda_c = config.effective_lambda_c();
    base.learning_rate = config.optimizer.learning_rate;
    std::size_t steps = 1;
    for (const auto& r : result.reports)
      for (const auto& c : r.clients) steps = std::max(steps, c.steps);
    base.local_steps = steps;
    result.theory = estimate_theory_params(result.trace, base);
    result.descent = descent_check(result.trace, *result.theory);
    for (std::size_t i = 0; i < result.descent->satisfied.size(); ++i) {
      result.reports[i].descent_ok = result.descent->satisfied[i];
    }
  }
  result.final_params = std::move(server.global);
  return result;
}

}  // namespace fedbcs
