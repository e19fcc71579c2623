#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmtl/tensor.hpp"

namespace fedmtl {

// In-memory dataset. Labels are either one column per task (binary
// multi-task data, shared_labels == false) or a one-hot class encoding used
// by every task (shared_labels == true, e.g. activity classes).
struct TabularDataset {
    Tensor2 features;                    // n x d
    Tensor2 labels;                      // n x L
    std::vector<int> subjects;           // optional per-row group key, size n or empty
    std::vector<std::string> task_names; // size = task count (columns or subjects)
    bool shared_labels = false;

    std::size_t n() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
};

// One client's private slice of the data. Only its own task's labels are
// present: a single column for per-task binary labels, the full one-hot
// block for shared label spaces.
struct Shard {
    int client_id = 0;
    int task_id = 0;
    Tensor2 train_x, train_y;
    Tensor2 test_x, test_y;
    std::vector<std::size_t> train_rows, test_rows; // original dataset row ids

    std::size_t train_size() const { return train_x.rows(); }
    std::size_t test_size() const { return test_x.rows(); }
};

struct SyntheticConfig {
    std::size_t samples = 1000;
    std::size_t latent_dim = 8;
    std::size_t feature_dim = 32;
    std::size_t tasks = 5;
    enum class Rule { Linear, Nonlinear } rule = Rule::Linear;
    double label_noise = 0.0; // flip probability, in [0, 0.5)
    std::uint64_t seed = 0;
};

// Multi-task binary data over a shared latent factor: features are a fixed
// random linear image of the latent vector (standardized per column), each
// task's label is a sign rule on the same latent vector, so the tasks share
// transferable structure.
TabularDataset gen_synthetic_multitask(const SyntheticConfig& cfg);

// Column layout of a delimiter-separated numeric text file. Labels and
// subjects may live in the same file (column indices) or in separate
// index-aligned files.
struct TabularSchema {
    std::vector<std::size_t> feature_cols; // empty = every remaining column
    std::vector<std::size_t> label_cols;   // per-task binary columns
    int label_col = -1;                    // single class column (1..classes)
    int subject_col = -1;
    std::size_t classes = 0;               // >0: one-hot encode label_col
    std::string labels_path;               // optional separate label file
    std::string subjects_path;             // optional separate subject file
};

TabularDataset load_tabular(const std::string& path, const TabularSchema& schema);

// The published human-activity layout: <dir>/{train,test}/{X_,y_,subject_}*.txt,
// 561 features, labels 1..6, subjects 1..30. Train and test partitions are
// merged; shards are re-split per subject downstream.
TabularDataset load_har(const std::string& dir);

// Materializes one shard from explicit row lists. label_column selects a
// single label column; -1 keeps the full label matrix.
Shard make_shard_from_rows(const TabularDataset& data, int client_id, int task_id,
                           const std::vector<std::size_t>& train_rows,
                           const std::vector<std::size_t>& test_rows, int label_column);

// The row split a single-client uniform partition would produce. Centralized
// scenarios reuse it so one-client topologies coincide with partition_uniform
// exactly.
void pooled_train_test_rows(std::size_t n, double train_fraction, std::uint64_t seed,
                            std::vector<std::size_t>& train_rows,
                            std::vector<std::size_t>& test_rows);

// Shuffles rows once (seeded), deals them evenly to M clients assigned to T
// equal task groups, keeps only the owning task's label column, and splits
// each shard train/test at train_fraction.
std::vector<Shard> partition_uniform(const TabularDataset& data, std::size_t clients,
                                     std::size_t tasks, double train_fraction,
                                     std::uint64_t seed);

// One shard per subject id; rows are shuffled within the subject before the
// train/test split.
std::vector<Shard> partition_by_subject(const TabularDataset& data, double train_fraction,
                                        std::uint64_t seed);

// Embedding file: header line "rows cols", then one numeric row per line.
Tensor2 load_frozen_embeddings(const std::string& path);

// Replaces the feature matrix with precomputed embeddings (a frozen
// extractor applied offline). Rows must align one-to-one.
TabularDataset with_embeddings(const TabularDataset& data, const Tensor2& embeddings);

} // namespace fedmtl
