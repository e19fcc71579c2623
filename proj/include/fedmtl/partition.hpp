#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmtl/nn.hpp"

namespace fedmtl {

// The four layer tiers, ordered input to output. A valid model never places
// a lower tier after a higher one.
enum class LayerGroup { Pretrained = 0, Common = 1, TaskSpecific = 2, Personal = 3 };

const char* to_string(LayerGroup g);
LayerGroup layer_group_from_string(const std::string& s);

struct PartitionedModel {
    Network layers;
    std::vector<LayerGroup> tags;   // one per layer, non-decreasing
    std::vector<bool> frozen;       // true for every Pretrained layer

    std::size_t size() const { return layers.size(); }
};

// Throws ConfigError if tags are out of order or the count disagrees.
void validate_partition(const std::vector<LayerGroup>& tags, std::size_t layer_count);

PartitionedModel build_partitioned_model(std::size_t input_width,
                                         const std::vector<LayerSpec>& arch,
                                         const std::vector<LayerGroup>& tags,
                                         std::uint64_t seed);

// Attach tags to an existing network (weights kept as-is).
PartitionedModel tag_network(Network net, const std::vector<LayerGroup>& tags);

// Forward over the concatenated layer list; identical to nn forward.
Tensor2 compose_forward(const PartitionedModel& model, const Tensor2& batch);
ForwardCache compose_forward_cached(const PartitionedModel& model, const Tensor2& batch);

// Weights of one group, in layer order.
struct LayerParams {
    Tensor2 weights;
    std::vector<double> bias;
};
using WeightFragment = std::vector<LayerParams>;

WeightFragment extract_fragment(const PartitionedModel& model, LayerGroup group);
void apply_fragment(PartitionedModel& model, LayerGroup group, const WeightFragment& fragment);

// Per-layer gradients split by tag. Pretrained layers never appear here.
struct GroupedGradients {
    std::vector<LayerGrad> common;
    std::vector<LayerGrad> task_specific;
    std::vector<LayerGrad> personal;
    std::size_t sample_count = 0; // N_m of the owning client
    int client_id = 0;
};

GroupedGradients split_gradients(const PartitionedModel& model, const GradientSet& grads);

// Client-local model: architecture and frozen Pretrained weights from the
// template, Common/TaskSpecific copied from server state, Personal owned by
// the client.
PartitionedModel assemble_client_model(const PartitionedModel& tmpl,
                                       const WeightFragment& common,
                                       const WeightFragment& task,
                                       const WeightFragment& personal);

// SGD over the non-frozen layers only.
void sgd_step(PartitionedModel& model, const GradientSet& grads, double eta);

std::size_t count_tag(const PartitionedModel& model, LayerGroup group);

} // namespace fedmtl
