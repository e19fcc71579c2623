#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedmtl/federation.hpp"

namespace fedmtl {

// The five experiment topologies. Each one fixes how data is dealt to
// clients and which layer tags the model carries:
//   CentralizedSeparate    one model per task, all data pooled
//   CentralizedJoint       one model, one output node per task
//   DistributedSeparate    every client trains alone (all Personal)
//   DistributedSeparateFL  independent federation per task group (all TaskSpecific)
//   DistributedMultiTaskFL explicit Common/TaskSpecific/Personal partition
enum class ScenarioKind {
    CentralizedSeparate,
    CentralizedJoint,
    DistributedSeparate,
    DistributedSeparateFL,
    DistributedMultiTaskFL,
};

const char* to_string(ScenarioKind k);
ScenarioKind scenario_from_string(const std::string& s);

enum class DatasetKind { Synthetic, Tabular, Har };

struct DatasetSection {
    DatasetKind kind = DatasetKind::Synthetic;
    SyntheticConfig synthetic;
    std::string path;       // tabular file
    TabularSchema schema;
    std::string har_dir;
    std::string embeddings; // optional precomputed-feature file
};

struct ModelSection {
    std::vector<std::size_t> hidden;
    Activation hidden_activation = Activation::ReLU;
    Activation output_activation = Activation::Sigmoid;
};

struct ExperimentConfig {
    DatasetSection dataset;
    ModelSection model;
    std::vector<LayerGroup> tags; // per trainable layer; derived from the scenario when empty
    ScenarioKind scenario = ScenarioKind::DistributedMultiTaskFL;
    std::size_t clients = 1;      // distributed scenarios with uniform partition
    double train_fraction = 0.8;

    // federation values; any of these may be a grid
    std::size_t rounds = 1;
    std::vector<double> learning_rates{0.1};
    std::vector<std::size_t> local_epochs{1};
    std::vector<std::size_t> batch_sizes{16};
    std::vector<std::size_t> clients_per_round{1};
    AggregationRule aggregation = AggregationRule::WeightedMean;

    std::uint64_t seed = 0;
    std::string output_dir;
};

// Flat INI-style text: [section] headers, key = value lines, # comments.
// Unknown keys and scenario-incompatible partitions are rejected with the
// offending key and line number.
ExperimentConfig parse_config(const std::string& path);

std::size_t grid_size(const ExperimentConfig& cfg);
bool is_singleton(const ExperimentConfig& cfg);

// Grid point i with singleton values and the derived seed (base seed + i).
ExperimentConfig grid_point_config(const ExperimentConfig& cfg, std::size_t index);

struct ScenarioRun {
    Simulation sim;
    MetricsLog log;
};

// Materializes the scenario (dataset, shards, model, tags) and runs R rounds.
// Requires a singleton config.
ScenarioRun run_scenario_full(const ExperimentConfig& cfg, std::size_t threads = 1);
MetricsLog run_scenario(const ExperimentConfig& cfg, std::size_t threads = 1);

struct GridPoint {
    std::size_t index = 0;
    double learning_rate = 0.0;
    std::size_t local_epochs = 0;
    std::size_t batch_size = 0;
    std::size_t clients_per_round = 0;
    std::uint64_t seed = 0;
    double final_accuracy = 0.0;
    bool diverged = false;
};

struct GridResult {
    std::vector<GridPoint> points;
    std::vector<MetricsLog> logs; // aligned with points; empty log for diverged points
    std::size_t best = 0;         // index of the selected point
};

// Runs every grid point; selects by final overall test accuracy. Diverged
// points are recorded and never selected.
GridResult grid_search(const ExperimentConfig& cfg, std::size_t threads = 1);

// metrics.csv (deterministic per-round rows) + timing.csv (wall clock).
void write_metrics(const MetricsLog& log, const std::string& dir);
MetricsLog read_metrics(const std::string& dir);

void write_grid_table(const GridResult& grid, const std::string& dir);

// report.csv: scenario x task accuracy matrix of final rounds (deterministic);
// report.txt: the same table plus per-scenario wall clock.
void write_report(const std::vector<std::pair<std::string, MetricsLog>>& runs,
                  const std::string& dir);

// `run` and `grid` subcommand bodies: execute and persist under out_dir.
MetricsLog run_to_dir(const ExperimentConfig& cfg, const std::string& out_dir,
                      std::size_t threads = 1);
GridResult grid_to_dir(const ExperimentConfig& cfg, const std::string& out_dir,
                       std::size_t threads = 1);

} // namespace fedmtl
