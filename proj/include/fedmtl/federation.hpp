#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedmtl/data.hpp"
#include "fedmtl/partition.hpp"
#include "fedmtl/rng.hpp"

namespace fedmtl {

// How per-group client updates are combined.
//   WeightedMean: sum N_m delta_m / sum N_m over the selected clients.
//   PaperLiteral: common layers  (1 / (T K N)) sum_t sum_m N_m delta_m,
//                 task layers    (1 / (K N))   sum_m N_m delta_m,
//                 with N the global sample count, exactly as printed.
enum class AggregationRule { WeightedMean, PaperLiteral };

const char* to_string(AggregationRule r);
AggregationRule aggregation_rule_from_string(const std::string& s);

struct FederationHyperparams {
    std::size_t rounds = 1;            // R
    std::size_t clients_per_round = 1; // K, per task group
    std::size_t local_epochs = 1;      // E
    std::size_t batch_size = 16;       // B
    double learning_rate = 0.1;        // eta
    AggregationRule aggregation = AggregationRule::WeightedMean;
    std::uint64_t seed = 0;
};

struct ClientState {
    int client_id = 0;
    int task_id = 0;
    Shard shard;
    WeightFragment personal; // never leaves the client

    std::size_t sample_count() const { return shard.train_size(); }
};

struct ServerState {
    WeightFragment common;
    std::vector<WeightFragment> task; // one per task group
    std::size_t round_index = 0;
    std::size_t total_samples = 0;    // N = sum of client train sizes
};

// K selected client ids per task group, ascending within each group.
struct RoundPlan {
    std::vector<std::vector<int>> selected;
};

RoundPlan sample_clients(Rng& rng, const std::vector<std::vector<int>>& groups, std::size_t k);

// Runs E local epochs of mini-batch SGD on the client's shard after loading
// the broadcast fragments. Returns the cumulative descent delta
// W_broadcast - W_after per Common/TaskSpecific layer; Personal updates are
// applied to the client in place and never returned. Mini-batches walk the
// shard's stored row order, so identical shards and broadcasts produce
// identical updates.
GroupedGradients local_update(ClientState& client, const PartitionedModel& tmpl,
                              const WeightFragment& common, const WeightFragment& task,
                              LossKind loss, const FederationHyperparams& hp);

// Aggregation over the selected clients. Updates are summed in ascending
// client-id order regardless of the order they arrive in, so the result is
// bitwise independent of execution interleaving (and of permutations of the
// update list).
std::vector<LayerGrad> aggregate_common(std::span<const GroupedGradients> updates,
                                        AggregationRule rule, std::size_t tasks,
                                        std::size_t clients_per_group,
                                        std::size_t total_samples);

// Same, over the K selected clients of one task group.
std::vector<LayerGrad> aggregate_task(std::span<const GroupedGradients> updates,
                                      AggregationRule rule, std::size_t clients_per_group,
                                      std::size_t total_samples);

struct RoundRecord {
    std::size_t round = 0;
    std::vector<double> task_accuracy;
    std::vector<double> task_loss;
    double overall_accuracy = 0.0;
    double overall_loss = 0.0;
    double wall_ms = 0.0;
};

struct MetricsLog {
    std::vector<std::string> task_names;
    std::vector<RoundRecord> rounds;

    const RoundRecord& final_round() const { return rounds.back(); }
};

struct EvalResult {
    std::size_t correct = 0;
    std::size_t samples = 0;
    double accuracy = 0.0;
    double loss = 0.0;
};

// Accuracy by argmax for multi-column softmax outputs (first maximum wins)
// or by the fixed tie rule "predict class 1 at >= 0.5" for sigmoid outputs.
EvalResult evaluate(const PartitionedModel& model, const Tensor2& test_x, const Tensor2& test_y,
                    LossKind loss);

// Binary accuracy of one output column against the same target column; used
// when a joint multi-label model is scored per task.
EvalResult evaluate_binary_column(const PartitionedModel& model, const Tensor2& test_x,
                                  const Tensor2& test_y, std::size_t column);

// How run_round turns client evaluations into per-task metrics. PerGroup
// averages over the clients of each task group; PerOutputColumn scores each
// output column of a joint multi-label model separately.
enum class EvalMode { PerGroup, PerOutputColumn };

// One federated experiment: architecture template (tags + frozen layers),
// clients, server state and the sampling stream.
struct Simulation {
    PartitionedModel tmpl;
    LossKind loss = LossKind::MeanSquaredError;
    std::vector<ClientState> clients;      // ascending client_id
    std::vector<std::vector<int>> groups;  // task -> client ids, ascending
    ServerState server;
    FederationHyperparams hp;
    Rng rng{0};
    std::size_t threads = 1;
    EvalMode eval_mode = EvalMode::PerGroup;
    std::vector<std::string> task_names;
};

// Server and client states initialised from the model's own weights.
Simulation make_simulation(PartitionedModel model, LossKind loss, std::vector<Shard> shards,
                           const FederationHyperparams& hp);

// One Algorithm-1 round: sample K clients per group, broadcast the common
// and task-specific weights, run local updates, aggregate per group and
// apply the deltas (server step 1.0). Returns evaluation over every
// client's held-out test split.
RoundRecord run_round(Simulation& sim);

MetricsLog run_training(Simulation& sim);

// Client m's current personalized model.
PartitionedModel client_model(const Simulation& sim, const ClientState& client);

// Versioned text checkpoint: server fragments, every client's personal
// fragment, round index and sampling-RNG state, hex-exact doubles. Reload
// resumes bit-identically.
void save_checkpoint(const Simulation& sim, const std::string& path);
void load_checkpoint(Simulation& sim, const std::string& path);

} // namespace fedmtl
