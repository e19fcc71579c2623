#include "fedmtl/partition.hpp"

#include "fedmtl/errors.hpp"

namespace fedmtl {

const char* to_string(LayerGroup g) {
    switch (g) {
        case LayerGroup::Pretrained: return "pretrained";
        case LayerGroup::Common: return "common";
        case LayerGroup::TaskSpecific: return "task";
        case LayerGroup::Personal: return "personal";
    }
    return "?";
}

LayerGroup layer_group_from_string(const std::string& s) {
    if (s == "pretrained" || s == "pre") return LayerGroup::Pretrained;
    if (s == "common" || s == "com") return LayerGroup::Common;
    if (s == "task" || s == "task_specific") return LayerGroup::TaskSpecific;
    if (s == "personal" || s == "pers") return LayerGroup::Personal;
    throw ConfigError("unknown layer group '" + s + "'");
}

void validate_partition(const std::vector<LayerGroup>& tags, std::size_t layer_count) {
    if (tags.size() != layer_count)
        throw ConfigError("partition: " + std::to_string(tags.size()) + " tags for " +
                          std::to_string(layer_count) + " layers");
    for (std::size_t i = 1; i < tags.size(); ++i)
        if (static_cast<int>(tags[i]) < static_cast<int>(tags[i - 1]))
            throw ConfigError(std::string("partition: ") + to_string(tags[i]) +
                              " layer after " + to_string(tags[i - 1]) + " at position " +
                              std::to_string(i));
}

PartitionedModel tag_network(Network net, const std::vector<LayerGroup>& tags) {
    validate_network(net);
    validate_partition(tags, net.size());
    PartitionedModel model;
    model.layers = std::move(net);
    model.tags = tags;
    model.frozen.resize(tags.size());
    for (std::size_t i = 0; i < tags.size(); ++i)
        model.frozen[i] = tags[i] == LayerGroup::Pretrained;
    return model;
}

PartitionedModel build_partitioned_model(std::size_t input_width,
                                         const std::vector<LayerSpec>& arch,
                                         const std::vector<LayerGroup>& tags,
                                         std::uint64_t seed) {
    return tag_network(init_weights(input_width, arch, seed), tags);
}

Tensor2 compose_forward(const PartitionedModel& model, const Tensor2& batch) {
    return forward_values(model.layers, batch);
}

ForwardCache compose_forward_cached(const PartitionedModel& model, const Tensor2& batch) {
    return forward(model.layers, batch);
}

WeightFragment extract_fragment(const PartitionedModel& model, LayerGroup group) {
    WeightFragment fragment;
    for (std::size_t l = 0; l < model.size(); ++l)
        if (model.tags[l] == group)
            fragment.push_back({model.layers[l].weights, model.layers[l].bias});
    return fragment;
}

void apply_fragment(PartitionedModel& model, LayerGroup group, const WeightFragment& fragment) {
    std::size_t next = 0;
    for (std::size_t l = 0; l < model.size(); ++l) {
        if (model.tags[l] != group) continue;
        if (next >= fragment.size())
            throw ShapeError(std::string("apply_fragment: too few ") + to_string(group) +
                             " entries (" + std::to_string(fragment.size()) + ")");
        const LayerParams& p = fragment[next++];
        if (!p.weights.same_shape(model.layers[l].weights) ||
            p.bias.size() != model.layers[l].bias.size())
            throw ShapeError(std::string("apply_fragment: ") + to_string(group) +
                             " fragment shape mismatch at layer " + std::to_string(l));
        model.layers[l].weights = p.weights;
        model.layers[l].bias = p.bias;
    }
    if (next != fragment.size())
        throw ShapeError(std::string("apply_fragment: ") + std::to_string(fragment.size()) +
                         " entries for " + std::to_string(next) + " " + to_string(group) +
                         " layers");
}

GroupedGradients split_gradients(const PartitionedModel& model, const GradientSet& grads) {
    if (grads.size() != model.size())
        throw ShapeError("split_gradients: " + std::to_string(grads.size()) +
                         " gradients for " + std::to_string(model.size()) + " layers");
    GroupedGradients out;
    for (std::size_t l = 0; l < model.size(); ++l) {
        switch (model.tags[l]) {
            case LayerGroup::Pretrained: break; // frozen, discarded
            case LayerGroup::Common: out.common.push_back(grads[l]); break;
            case LayerGroup::TaskSpecific: out.task_specific.push_back(grads[l]); break;
            case LayerGroup::Personal: out.personal.push_back(grads[l]); break;
        }
    }
    return out;
}

PartitionedModel assemble_client_model(const PartitionedModel& tmpl,
                                       const WeightFragment& common,
                                       const WeightFragment& task,
                                       const WeightFragment& personal) {
    PartitionedModel model = tmpl;
    apply_fragment(model, LayerGroup::Common, common);
    apply_fragment(model, LayerGroup::TaskSpecific, task);
    apply_fragment(model, LayerGroup::Personal, personal);
    return model;
}

void sgd_step(PartitionedModel& model, const GradientSet& grads, double eta) {
    if (grads.size() != model.size())
        throw ShapeError("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(model.size()) + " layers");
    for (std::size_t l = 0; l < model.size(); ++l) {
        if (model.frozen[l]) continue;
        sgd_step(model.layers[l], grads[l], eta);
    }
}

std::size_t count_tag(const PartitionedModel& model, LayerGroup group) {
    std::size_t n = 0;
    for (LayerGroup t : model.tags) n += t == group;
    return n;
}

} // namespace fedmtl
