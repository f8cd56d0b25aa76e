#include "fedsim/fedcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsim {

std::uint64_t round_seed(std::uint64_t fed_seed, std::size_t round) {
  return rng::derive_seed(fed_seed, static_cast<std::uint64_t>(round));
}

std::uint64_t selection_seed(std::uint64_t fed_seed, std::size_t round) {
  return rng::derive_seed(round_seed(fed_seed, round), 1);
}

std::uint64_t client_seed(std::uint64_t fed_seed, std::size_t round,
                          std::size_t client) {
  return rng::derive_seed(round_seed(fed_seed, round), 2,
                          static_cast<std::uint64_t>(client));
}

std::vector<std::size_t> select_clients(std::size_t all, double fraction,
                                        std::uint64_t round_seed) {
  if (all == 0) throw std::invalid_argument("select_clients: no clients");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("select_clients: fraction " +
                                std::to_string(fraction) +
                                " outside (0,1]");
  // The nudge keeps ceil() honest when fraction * all lands a hair above an
  // integer (0.4 * 20 must select 8, not 9).
  double k_real = fraction * static_cast<double>(all);
  std::size_t k = static_cast<std::size_t>(std::ceil(k_real - 1e-9));
  k = std::max<std::size_t>(1, std::min(k, all));
  rng::Stream stream(round_seed);
  return stream.sample_without_replacement(all, k);
}

MlpParams local_update(const MlpParams& global_params, const Dataset& shard,
                       std::size_t epochs, double learning_rate,
                       std::size_t batch_size, std::uint64_t seed,
                       Execution exec, const std::string& context) {
  if (shard.size() == 0)
    throw std::invalid_argument(context + ": empty shard");
  MlpParams params = global_params;

  ExampleGradFn fn = [&shard](const MlpParams& p,
                              std::size_t i) -> ExampleLossGrad {
    Vector logits = forward(p, shard.example(i));
    LossGrad ce =
        cross_entropy(logits, static_cast<std::size_t>(shard.labels[i]));
    return {ce.value, backward(p, shard.example(i), ce.grad)};
  };

  SgdConfig loop;
  loop.epochs = epochs;
  loop.learning_rate = learning_rate;
  loop.batch_size = batch_size;
  loop.seed = seed;
  loop.exec = exec;
  loop.context = context;
  sgd_train(params, shard.size(), fn, loop);
  return params;
}

MlpParams aggregate(const std::vector<ClientUpdate>& updates) {
  if (updates.empty())
    throw std::invalid_argument("aggregate: no client updates");
  std::size_t total = 0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (updates[i].data_size == 0)
      throw std::invalid_argument("aggregate: update " + std::to_string(i) +
                                  " has data_size 0");
    if (!same_shape(updates[i].params, updates[0].params))
      throw std::invalid_argument("aggregate: update " + std::to_string(i) +
                                  " params shape differs from update 0");
    total += updates[i].data_size;
  }
  std::vector<MlpParams> models;
  std::vector<double> weights;
  models.reserve(updates.size());
  weights.reserve(updates.size());
  for (const ClientUpdate& u : updates) {
    models.push_back(u.params);
    weights.push_back(static_cast<double>(u.data_size) /
                      static_cast<double>(total));
  }
  return weighted_sum(models, weights);
}

FedResult run_federated(const MlpParams& init_params, const FedConfig& cfg,
                        const PartitionPlan& partition, const Dataset& data,
                        const FedRunOptions& opts) {
  check_chain(init_params);
  if (cfg.clients == 0)
    throw std::invalid_argument("run_federated: clients is 0");
  if (partition.client_count != cfg.clients ||
      partition.client_indices.size() != cfg.clients)
    throw std::invalid_argument("run_federated: partition has " +
                                std::to_string(partition.client_indices.size()) +
                                " shards for " + std::to_string(cfg.clients) +
                                " clients");

  // The partition must cover the dataset exactly once.
  std::vector<char> seen(data.size(), 0);
  std::size_t covered = 0;
  for (std::size_t c = 0; c < partition.client_indices.size(); ++c) {
    if (partition.client_indices[c].empty())
      throw std::invalid_argument("run_federated: client " + std::to_string(c) +
                                  " has an empty shard");
    for (std::size_t idx : partition.client_indices[c]) {
      if (idx >= data.size() || seen[idx])
        throw std::invalid_argument(
            "run_federated: partition does not cover the dataset exactly "
            "(bad or repeated index " +
            std::to_string(idx) + ")");
      seen[idx] = 1;
      ++covered;
    }
  }
  if (covered != data.size())
    throw std::invalid_argument("run_federated: partition covers " +
                                std::to_string(covered) + " of " +
                                std::to_string(data.size()) + " examples");

  std::vector<Dataset> shards;
  shards.reserve(cfg.clients);
  for (std::size_t c = 0; c < cfg.clients; ++c)
    shards.push_back(subset(data, partition.client_indices[c]));

  FedResult result;
  result.params = init_params;
  result.rounds.reserve(cfg.rounds);

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    std::vector<std::size_t> sel =
        select_clients(cfg.clients, cfg.participation_fraction,
                       selection_seed(cfg.seed, t));

    // Parallelism sits at the client level; each local pass runs its inner
    // loop serially. Results land in per-client slots, so scheduling order
    // cannot change anything.
    std::vector<ClientUpdate> updates(sel.size());
    parallel_for(sel.size(), cfg.exec, [&](std::size_t i) {
      const std::size_t id = sel[i];
      updates[i].params = local_update(
          result.params, shards[id], cfg.local_epochs, cfg.learning_rate,
          cfg.batch_size, client_seed(cfg.seed, t, id), Execution::serial,
          "round " + std::to_string(t) + ", client " + std::to_string(id));
      updates[i].data_size = shards[id].size();
    });

    RoundRecord rec;
    rec.round = t;
    rec.selected = sel;
    std::size_t total = 0;
    for (const ClientUpdate& u : updates) total += u.data_size;
    for (const ClientUpdate& u : updates) {
      rec.sizes.push_back(u.data_size);
      rec.weights.push_back(static_cast<double>(u.data_size) /
                            static_cast<double>(total));
    }
    rec.aggregated = aggregate(updates);

    if (opts.eval_data && opts.eval_data->size() > 0) {
      std::vector<std::int32_t> pred =
          predict_labels(rec.aggregated, *opts.eval_data, cfg.exec);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == opts.eval_data->labels[i]) ++correct;
      rec.accuracy = static_cast<double>(correct) /
                     static_cast<double>(opts.eval_data->size());
    }

    result.params = rec.aggregated;
    if (opts.on_round) opts.on_round(rec);
    result.rounds.push_back(std::move(rec));
  }
  return result;
}

}  // namespace fedsim
