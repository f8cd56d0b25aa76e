#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/datagen.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

struct FedConfig {
  std::size_t clients = 20;
  double participation_fraction = 0.4;
  std::size_t rounds = 1;
  std::size_t local_epochs = 1;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Execution exec = Execution::serial;
};

// Per-round randomness is derived from (seed, round) and, below that, from a
// fixed slot per purpose, so client completion order and stage toggles can
// never shift a draw. Public so tests can replay the exact chain.
std::uint64_t round_seed(std::uint64_t fed_seed, std::size_t round);
std::uint64_t selection_seed(std::uint64_t fed_seed, std::size_t round);
std::uint64_t client_seed(std::uint64_t fed_seed, std::size_t round,
                          std::size_t client);

// Uniform sample without replacement of ceil(fraction * all) client ids,
// returned sorted. fraction must be in (0, 1].
std::vector<std::size_t> select_clients(std::size_t all, double fraction,
                                        std::uint64_t round_seed);

// One client's local pass: plain cross-entropy SGD from the broadcast
// params; the input object is untouched. `context` prefixes any diagnostic
// (non-finite loss) with round/client identity.
MlpParams local_update(const MlpParams& global_params, const Dataset& shard,
                       std::size_t epochs, double learning_rate,
                       std::size_t batch_size, std::uint64_t seed,
                       Execution exec = Execution::serial,
                       const std::string& context = "local_update");

struct ClientUpdate {
  MlpParams params;
  std::size_t data_size = 0;
};

// Data-size-weighted parameter mean: weights are data_size / total over the
// given updates only (unselected clients contribute nothing).
MlpParams aggregate(const std::vector<ClientUpdate>& updates);

// What the coordinator keeps per round. Parameters and sizes only; gradients
// never leave a client, so there is nothing gradient-shaped to record.
struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> selected;
  std::vector<double> weights;      // parallel to selected, sums to 1
  std::vector<std::size_t> sizes;   // parallel to selected
  std::optional<double> accuracy;   // on eval_data when provided
  MlpParams aggregated;
};

struct FedRunOptions {
  const Dataset* eval_data = nullptr;
  std::function<void(const RoundRecord&)> on_round;  // streaming hook
};

struct FedResult {
  MlpParams params;
  std::vector<RoundRecord> rounds;
};

// The round engine: select, broadcast, local updates (parallel across the
// selected clients), aggregate, evaluate, record. rounds = 0 returns the
// initial params untouched. Throws if the partition does not cover the
// dataset exactly or any client shard is empty.
FedResult run_federated(const MlpParams& init_params, const FedConfig& cfg,
                        const PartitionPlan& partition, const Dataset& data,
                        const FedRunOptions& opts = {});

}  // namespace fedsim
