#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "fedbcs/federation.hpp"
#include "fedbcs/ops.hpp"

namespace fedbcs::testing {

/// Plain FedAvg written out directly: Dice-only minibatch SGD on a SegNet
/// without FSR, then sample-count weighted averaging. Uses the library only
/// for the network forward pass, the Dice loss and the client streams.
/// Returns the global parameters after each round.
inline std::vector<NamedTensors> reference_fedavg(const FederationConfig& config,
                                                  const std::vector<DomainData>& data) {
  SegNetConfig net_config = config.net;
  net_config.fsr_enabled = false;
  SegNet init(net_config);
  init.init_parameters(config.seed);
  NamedTensors global = snapshot(init.parameters());

  std::size_t total = 0;
  for (const auto& d : data) total += d.train.size();

  std::vector<NamedTensors> history;
  for (std::size_t round = 0; round < config.rounds; ++round) {
    std::vector<NamedTensors> local(data.size());
    for (std::size_t m = 0; m < data.size(); ++m) {
      SegNet net(net_config);
      load(net.parameters(), global);
      auto rng = client_rng(config.seed, static_cast<int>(m), round);
      const auto& train = data[m].train;
      std::vector<std::size_t> order(train.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
          const std::size_t stop = std::min(train.size(), start + config.batch_size);
          zero_grads(net.parameters());
          for (std::size_t k = start; k < stop; ++k) {
            Tape tape;
            auto bound = net.bind(tape);
            Var loss = dice_loss(net.forward(bound, train[order[k]].image).logits, train[order[k]].labels);
            tape.backward(ops::scale(loss, Real{1} / static_cast<Real>(stop - start)));
          }
          const Real lr = config.optimizer.learning_rate, wd = config.optimizer.weight_decay;
          for (auto& [id, p] : net.parameters()) {
            for (std::size_t i = 0; i < p.value.size(); ++i) {
              p.value[i] -= lr * (p.gradient[i] + wd * p.value[i]);
            }
          }
        }
      }
      local[m] = snapshot(net.parameters());
    }
    NamedTensors next;
    for (const auto& [id, value] : global) {
      Tensor acc = Tensor::zeros(value.shape());
      for (std::size_t m = 0; m < data.size(); ++m) {
        const Real w = static_cast<Real>(data[m].train.size()) / static_cast<Real>(total);
        const Tensor& theta = local[m].at(id);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += theta[i] * w;
      }
      next.emplace(id, std::move(acc));
    }
    global = std::move(next);
    history.push_back(global);
  }
  return history;
}

}  // namespace fedbcs::testing
