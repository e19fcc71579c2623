#include "fedmtl/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "fedmtl/errors.hpp"

namespace fedmtl {

namespace {

// ---------------------------------------------------------------------------
// flat INI-style config file
// ---------------------------------------------------------------------------

struct IniEntry {
    std::string key, value;
    std::size_t line = 0;
    mutable bool used = false;
};

struct IniSection {
    std::string name;
    std::size_t line = 0;
    std::vector<IniEntry> entries;
};

struct IniFile {
    std::string path;
    std::vector<IniSection> sections;

    const IniSection* find(const std::string& name) const {
        for (const IniSection& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

IniFile parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    IniFile file;
    file.path = path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line.erase(comment);
        const std::string text = trim(line);
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']')
                throw ParseError(path + ":" + std::to_string(line_no) + ": unterminated section header");
            IniSection section;
            section.name = trim(text.substr(1, text.size() - 2));
            section.line = line_no;
            if (file.find(section.name))
                throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate section [" +
                                 section.name + "]");
            file.sections.push_back(std::move(section));
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        if (file.sections.empty())
            throw ParseError(path + ":" + std::to_string(line_no) + ": key outside any [section]");
        IniEntry entry;
        entry.key = trim(text.substr(0, eq));
        entry.value = trim(text.substr(eq + 1));
        entry.line = line_no;
        if (entry.key.empty())
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty key");
        file.sections.back().entries.push_back(std::move(entry));
    }
    return file;
}

// Accessor that records which keys were consumed so leftovers can be
// rejected by name and line.
struct SectionReader {
    const IniFile& file;
    const IniSection* section;

    const IniEntry* find(const std::string& key) const {
        if (!section) return nullptr;
        for (const IniEntry& e : section->entries)
            if (e.key == key) {
                e.used = true;
                return &e;
            }
        return nullptr;
    }

    bool has(const std::string& key) const { return find(key) != nullptr; }

    std::string str(const std::string& key, const std::string& fallback) const {
        const IniEntry* e = find(key);
        return e ? e->value : fallback;
    }

    std::string require(const std::string& key) const {
        const IniEntry* e = find(key);
        if (!e)
            throw ParseError(file.path + ": missing key '" + key + "' in [" +
                             (section ? section->name : "?") + "]");
        return e->value;
    }

    std::size_t line_of(const std::string& key) const {
        if (section)
            for (const IniEntry& e : section->entries)
                if (e.key == key) return e.line;
        return section ? section->line : 0;
    }
};

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string current;
    for (char ch : value + ",") {
        if (ch == ',') {
            const std::string part = trim(current);
            if (!part.empty()) parts.push_back(part);
            current.clear();
        } else {
            current += ch;
        }
    }
    return parts;
}

double to_double(const IniFile& file, const IniEntry& entry, const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw ParseError(file.path + ":" + std::to_string(entry.line) + ": key '" + entry.key +
                         "': non-numeric value '" + token + "'");
    return v;
}

std::size_t to_count(const IniFile& file, const IniEntry& entry, const std::string& token) {
    const double v = to_double(file, entry, token);
    if (v < 0 || v != std::floor(v))
        throw ParseError(file.path + ":" + std::to_string(entry.line) + ": key '" + entry.key +
                         "' must be a non-negative integer, got '" + token + "'");
    return static_cast<std::size_t>(v);
}

std::vector<double> double_list(const IniFile& file, const SectionReader& reader,
                                const std::string& key, std::vector<double> fallback) {
    const IniEntry* e = reader.find(key);
    if (!e) return fallback;
    std::vector<double> values;
    for (const std::string& token : split_list(e->value)) values.push_back(to_double(file, *e, token));
    if (values.empty())
        throw ParseError(file.path + ":" + std::to_string(e->line) + ": key '" + key + "' is empty");
    return values;
}

std::vector<std::size_t> count_list(const IniFile& file, const SectionReader& reader,
                                    const std::string& key, std::vector<std::size_t> fallback) {
    const IniEntry* e = reader.find(key);
    if (!e) return fallback;
    std::vector<std::size_t> values;
    for (const std::string& token : split_list(e->value)) values.push_back(to_count(file, *e, token));
    if (values.empty())
        throw ParseError(file.path + ":" + std::to_string(e->line) + ": key '" + key + "' is empty");
    return values;
}

// column spec: comma list of indices or inclusive ranges, e.g. "0-560,562"
std::vector<std::size_t> column_list(const IniFile& file, const SectionReader& reader,
                                     const std::string& key) {
    const IniEntry* e = reader.find(key);
    if (!e) return {};
    std::vector<std::size_t> columns;
    for (const std::string& token : split_list(e->value)) {
        const auto dash = token.find('-');
        if (dash == std::string::npos) {
            columns.push_back(to_count(file, *e, token));
        } else {
            const std::size_t lo = to_count(file, *e, trim(token.substr(0, dash)));
            const std::size_t hi = to_count(file, *e, trim(token.substr(dash + 1)));
            if (hi < lo)
                throw ParseError(file.path + ":" + std::to_string(e->line) + ": bad range '" +
                                 token + "'");
            for (std::size_t c = lo; c <= hi; ++c) columns.push_back(c);
        }
    }
    return columns;
}

void reject_unknown_keys(const IniFile& file) {
    static const std::set<std::string> known_sections = {"experiment", "dataset", "model",
                                                         "partition", "federation", "scenario"};
    for (const IniSection& section : file.sections) {
        if (!known_sections.count(section.name))
            throw ParseError(file.path + ":" + std::to_string(section.line) +
                             ": unknown section [" + section.name + "]");
        for (const IniEntry& entry : section.entries)
            if (!entry.used)
                throw ParseError(file.path + ":" + std::to_string(entry.line) +
                                 ": unknown key '" + entry.key + "' in [" + section.name + "]");
    }
}

std::vector<LayerGroup> derived_tags(ScenarioKind scenario, std::size_t layer_count) {
    LayerGroup tag = LayerGroup::Common;
    switch (scenario) {
        case ScenarioKind::CentralizedSeparate: tag = LayerGroup::TaskSpecific; break;
        case ScenarioKind::CentralizedJoint: tag = LayerGroup::Common; break;
        case ScenarioKind::DistributedSeparate: tag = LayerGroup::Personal; break;
        case ScenarioKind::DistributedSeparateFL: tag = LayerGroup::TaskSpecific; break;
        case ScenarioKind::DistributedMultiTaskFL: tag = LayerGroup::Common; break;
    }
    return std::vector<LayerGroup>(layer_count, tag);
}

void check_scenario_tags(const IniFile& file, std::size_t line, ScenarioKind scenario,
                         const std::vector<LayerGroup>& tags) {
    auto reject = [&](const char* why) {
        throw ParseError(file.path + ":" + std::to_string(line) + ": key 'tags': " + why);
    };
    switch (scenario) {
        case ScenarioKind::CentralizedJoint:
            for (LayerGroup t : tags)
                if (t != LayerGroup::Common)
                    reject("centralized_joint trains one shared model; only common tags are valid");
            break;
        case ScenarioKind::CentralizedSeparate:
            for (LayerGroup t : tags)
                if (t != LayerGroup::TaskSpecific)
                    reject("centralized_separate trains one model per task; only task tags are valid");
            break;
        case ScenarioKind::DistributedSeparate:
            for (LayerGroup t : tags)
                if (t != LayerGroup::Personal)
                    reject("distributed_separate trains clients in isolation; only personal tags are valid");
            break;
        case ScenarioKind::DistributedSeparateFL:
            for (LayerGroup t : tags)
                if (t != LayerGroup::TaskSpecific)
                    reject("distributed_separate_fl federates within task groups; only task tags are valid");
            break;
        case ScenarioKind::DistributedMultiTaskFL:
            break;
    }
}

} // namespace

const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::CentralizedSeparate: return "centralized_separate";
        case ScenarioKind::CentralizedJoint: return "centralized_joint";
        case ScenarioKind::DistributedSeparate: return "distributed_separate";
        case ScenarioKind::DistributedSeparateFL: return "distributed_separate_fl";
        case ScenarioKind::DistributedMultiTaskFL: return "distributed_multitask_fl";
    }
    return "?";
}

ScenarioKind scenario_from_string(const std::string& s) {
    if (s == "centralized_separate") return ScenarioKind::CentralizedSeparate;
    if (s == "centralized_joint") return ScenarioKind::CentralizedJoint;
    if (s == "distributed_separate") return ScenarioKind::DistributedSeparate;
    if (s == "distributed_separate_fl") return ScenarioKind::DistributedSeparateFL;
    if (s == "distributed_multitask_fl") return ScenarioKind::DistributedMultiTaskFL;
    throw ConfigError("unknown scenario '" + s + "'");
}

ExperimentConfig parse_config(const std::string& path) {
    const IniFile file = parse_ini(path);
    ExperimentConfig cfg;

    SectionReader experiment{file, file.find("experiment")};
    if (experiment.section) {
        cfg.seed = static_cast<std::uint64_t>(
            count_list(file, experiment, "seed", {0}).front());
        cfg.output_dir = experiment.str("output", "");
    }

    const IniSection* dataset_section = file.find("dataset");
    if (!dataset_section) throw ParseError(path + ": missing [dataset] section");
    SectionReader dataset{file, dataset_section};
    const std::string kind = dataset.require("kind");
    if (kind == "synthetic") {
        cfg.dataset.kind = DatasetKind::Synthetic;
        SyntheticConfig& synth = cfg.dataset.synthetic;
        synth.samples = count_list(file, dataset, "samples", {synth.samples}).front();
        synth.latent_dim = count_list(file, dataset, "latent_dim", {synth.latent_dim}).front();
        synth.feature_dim = count_list(file, dataset, "feature_dim", {synth.feature_dim}).front();
        synth.tasks = count_list(file, dataset, "tasks", {synth.tasks}).front();
        const std::string rule = dataset.str("rule", "linear");
        if (rule == "linear") synth.rule = SyntheticConfig::Rule::Linear;
        else if (rule == "nonlinear") synth.rule = SyntheticConfig::Rule::Nonlinear;
        else
            throw ParseError(path + ":" + std::to_string(dataset.line_of("rule")) +
                             ": rule must be linear or nonlinear");
        synth.label_noise = double_list(file, dataset, "label_noise", {0.0}).front();
    } else if (kind == "tabular") {
        cfg.dataset.kind = DatasetKind::Tabular;
        cfg.dataset.path = dataset.require("path");
        cfg.dataset.schema.feature_cols = column_list(file, dataset, "feature_cols");
        cfg.dataset.schema.label_cols = column_list(file, dataset, "label_cols");
        if (dataset.has("label_col"))
            cfg.dataset.schema.label_col =
                static_cast<int>(count_list(file, dataset, "label_col", {}).front());
        if (dataset.has("subject_col"))
            cfg.dataset.schema.subject_col =
                static_cast<int>(count_list(file, dataset, "subject_col", {}).front());
        cfg.dataset.schema.classes = count_list(file, dataset, "classes", {0}).front();
        cfg.dataset.schema.labels_path = dataset.str("labels_path", "");
        cfg.dataset.schema.subjects_path = dataset.str("subjects_path", "");
    } else if (kind == "har") {
        cfg.dataset.kind = DatasetKind::Har;
        cfg.dataset.har_dir = dataset.require("dir");
    } else {
        throw ParseError(path + ":" + std::to_string(dataset.line_of("kind")) +
                         ": kind must be synthetic, tabular or har");
    }
    cfg.dataset.embeddings = dataset.str("embeddings", "");

    const IniSection* model_section = file.find("model");
    if (!model_section) throw ParseError(path + ": missing [model] section");
    SectionReader model{file, model_section};
    cfg.model.hidden = count_list(file, model, "hidden", {});
    cfg.model.hidden_activation = activation_from_string(model.str("hidden_activation", "relu"));
    cfg.model.output_activation = activation_from_string(model.str("output", "sigmoid"));
    if (cfg.model.output_activation != Activation::Sigmoid &&
        cfg.model.output_activation != Activation::Softmax)
        throw ParseError(path + ":" + std::to_string(model.line_of("output")) +
                         ": output must be sigmoid or softmax");

    const IniSection* scenario_section = file.find("scenario");
    if (!scenario_section) throw ParseError(path + ": missing [scenario] section");
    SectionReader scenario{file, scenario_section};
    try {
        cfg.scenario = scenario_from_string(scenario.require("kind"));
    } catch (const ConfigError& e) {
        throw ParseError(path + ":" + std::to_string(scenario.line_of("kind")) + ": " + e.what());
    }
    cfg.clients = count_list(file, scenario, "clients", {1}).front();

    const IniSection* federation_section = file.find("federation");
    if (!federation_section) throw ParseError(path + ": missing [federation] section");
    SectionReader federation{file, federation_section};
    const IniEntry* rounds_entry = federation.find("rounds");
    if (!rounds_entry) throw ParseError(path + ": missing key 'rounds' in [federation]");
    cfg.rounds = to_count(file, *rounds_entry, rounds_entry->value);
    cfg.learning_rates = double_list(file, federation, "learning_rate", {0.1});
    cfg.local_epochs = count_list(file, federation, "local_epochs", {1});
    cfg.batch_sizes = count_list(file, federation, "batch_size", {16});
    cfg.clients_per_round = count_list(file, federation, "clients_per_round", {1});
    try {
        cfg.aggregation = aggregation_rule_from_string(federation.str("aggregation", "weighted_mean"));
    } catch (const ConfigError& e) {
        throw ParseError(path + ":" + std::to_string(federation.line_of("aggregation")) + ": " +
                         e.what());
    }
    cfg.train_fraction = double_list(file, federation, "train_fraction", {0.8}).front();
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
        throw ParseError(path + ":" + std::to_string(federation.line_of("train_fraction")) +
                         ": train_fraction must be inside (0, 1)");
    for (double lr : cfg.learning_rates)
        if (!(lr > 0.0))
            throw ParseError(path + ":" + std::to_string(federation.line_of("learning_rate")) +
                             ": learning_rate must be positive");
    for (std::size_t v : cfg.local_epochs)
        if (v == 0)
            throw ParseError(path + ":" + std::to_string(federation.line_of("local_epochs")) +
                             ": local_epochs must be >= 1");
    for (std::size_t v : cfg.batch_sizes)
        if (v == 0)
            throw ParseError(path + ":" + std::to_string(federation.line_of("batch_size")) +
                             ": batch_size must be >= 1");
    for (std::size_t v : cfg.clients_per_round)
        if (v == 0)
            throw ParseError(path + ":" + std::to_string(federation.line_of("clients_per_round")) +
                             ": clients_per_round must be >= 1");
    if (cfg.rounds == 0)
        throw ParseError(path + ":" + std::to_string(federation.line_of("rounds")) +
                         ": rounds must be >= 1");

    const std::size_t layer_count = cfg.model.hidden.size() + 1;
    SectionReader partition{file, file.find("partition")};
    if (partition.section && partition.has("tags")) {
        const IniEntry* e = partition.find("tags");
        std::vector<LayerGroup> tags;
        for (const std::string& token : split_list(e->value)) {
            try {
                tags.push_back(layer_group_from_string(token));
            } catch (const ConfigError& err) {
                throw ParseError(path + ":" + std::to_string(e->line) + ": " + err.what());
            }
        }
        try {
            validate_partition(tags, layer_count);
        } catch (const ConfigError& err) {
            throw ParseError(path + ":" + std::to_string(e->line) + ": " + err.what());
        }
        check_scenario_tags(file, e->line, cfg.scenario, tags);
        cfg.tags = std::move(tags);
    } else if (cfg.scenario == ScenarioKind::DistributedMultiTaskFL) {
        throw ParseError(path + ": distributed_multitask_fl requires [partition] tags");
    } else {
        cfg.tags = derived_tags(cfg.scenario, layer_count);
    }

    reject_unknown_keys(file);
    return cfg;
}

std::size_t grid_size(const ExperimentConfig& cfg) {
    return cfg.learning_rates.size() * cfg.local_epochs.size() * cfg.batch_sizes.size() *
           cfg.clients_per_round.size();
}

bool is_singleton(const ExperimentConfig& cfg) { return grid_size(cfg) == 1; }

ExperimentConfig grid_point_config(const ExperimentConfig& cfg, std::size_t index) {
    const std::size_t nk = cfg.clients_per_round.size();
    const std::size_t nb = cfg.batch_sizes.size();
    const std::size_t ne = cfg.local_epochs.size();
    if (index >= grid_size(cfg)) throw ConfigError("grid index out of range");

    ExperimentConfig point = cfg;
    point.clients_per_round = {cfg.clients_per_round[index % nk]};
    point.batch_sizes = {cfg.batch_sizes[(index / nk) % nb]};
    point.local_epochs = {cfg.local_epochs[(index / (nk * nb)) % ne]};
    point.learning_rates = {cfg.learning_rates[index / (nk * nb * ne)]};
    point.seed = cfg.seed + index;
    return point;
}

namespace {

// dataset, shards, model and evaluation wiring for one scenario
struct Materialized {
    PartitionedModel model;
    LossKind loss = LossKind::BinaryCrossEntropy;
    std::vector<Shard> shards;
    EvalMode eval_mode = EvalMode::PerGroup;
    std::vector<std::string> task_names;
};

TabularDataset load_dataset(const ExperimentConfig& cfg) {
    TabularDataset data;
    switch (cfg.dataset.kind) {
        case DatasetKind::Synthetic: {
            SyntheticConfig synth = cfg.dataset.synthetic;
            synth.seed = derive_seed(cfg.seed, 0xda7a);
            data = gen_synthetic_multitask(synth);
            break;
        }
        case DatasetKind::Tabular:
            data = load_tabular(cfg.dataset.path, cfg.dataset.schema);
            break;
        case DatasetKind::Har:
            data = load_har(cfg.dataset.har_dir);
            break;
    }
    if (!cfg.dataset.embeddings.empty())
        data = with_embeddings(data, load_frozen_embeddings(cfg.dataset.embeddings));
    return data;
}

void pooled_split(const ExperimentConfig& cfg, const TabularDataset& data,
                  std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
    if (!data.subjects.empty()) {
        // union of the per-subject splits, so centralized runs score the very
        // same held-out rows as the distributed ones
        for (const Shard& s :
             partition_by_subject(data, cfg.train_fraction, derive_seed(cfg.seed, 0x5b))) {
            train.insert(train.end(), s.train_rows.begin(), s.train_rows.end());
            test.insert(test.end(), s.test_rows.begin(), s.test_rows.end());
        }
        return;
    }
    pooled_train_test_rows(data.n(), cfg.train_fraction, derive_seed(cfg.seed, 0x5b), train, test);
}

Materialized materialize(const ExperimentConfig& cfg) {
    Materialized mat;
    const TabularDataset data = load_dataset(cfg);
    const bool shared = data.shared_labels;

    // validate output head against the label layout
    if (shared && cfg.model.output_activation != Activation::Softmax)
        throw ConfigError("datasets with a shared class label need a softmax output");
    if (!shared && cfg.model.output_activation != Activation::Sigmoid)
        throw ConfigError("per-task binary labels need a sigmoid output");
    mat.loss = shared ? LossKind::CategoricalCrossEntropy : LossKind::BinaryCrossEntropy;

    // shards and task names
    switch (cfg.scenario) {
        case ScenarioKind::CentralizedSeparate: {
            std::vector<std::size_t> train, test;
            pooled_split(cfg, data, train, test);
            if (shared) {
                mat.shards.push_back(make_shard_from_rows(data, 0, 0, train, test, -1));
                mat.task_names.push_back("all");
            } else {
                for (std::size_t t = 0; t < data.labels.cols(); ++t) {
                    mat.shards.push_back(make_shard_from_rows(data, static_cast<int>(t),
                                                              static_cast<int>(t), train, test,
                                                              static_cast<int>(t)));
                    mat.task_names.push_back(data.task_names[t]);
                }
            }
            break;
        }
        case ScenarioKind::CentralizedJoint: {
            std::vector<std::size_t> train, test;
            pooled_split(cfg, data, train, test);
            mat.shards.push_back(make_shard_from_rows(data, 0, 0, train, test, -1));
            if (shared) {
                mat.task_names.push_back("all");
            } else {
                mat.eval_mode = EvalMode::PerOutputColumn;
                mat.task_names = data.task_names;
            }
            break;
        }
        case ScenarioKind::DistributedSeparate:
        case ScenarioKind::DistributedSeparateFL:
        case ScenarioKind::DistributedMultiTaskFL: {
            if (shared) {
                // subjects are the tasks
                mat.shards = partition_by_subject(data, cfg.train_fraction,
                                                  derive_seed(cfg.seed, 0x5b));
                std::set<int> subjects(data.subjects.begin(), data.subjects.end());
                for (int s : subjects) mat.task_names.push_back("subject_" + std::to_string(s));
            } else {
                mat.shards = partition_uniform(data, cfg.clients, data.labels.cols(),
                                               cfg.train_fraction, derive_seed(cfg.seed, 0x5b));
                mat.task_names = data.task_names;
            }
            break;
        }
    }

    // model head width
    std::size_t out_width = 1;
    if (shared) {
        out_width = data.labels.cols();
    } else if (cfg.scenario == ScenarioKind::CentralizedJoint) {
        out_width = data.labels.cols();
    }

    std::vector<LayerSpec> arch;
    for (std::size_t w : cfg.model.hidden) arch.push_back({w, cfg.model.hidden_activation});
    arch.push_back({out_width, cfg.model.output_activation});

    mat.model = build_partitioned_model(data.dim(), arch, cfg.tags, derive_seed(cfg.seed, 0x111));
    return mat;
}

FederationHyperparams singleton_hp(const ExperimentConfig& cfg) {
    if (!is_singleton(cfg))
        throw ConfigError("config declares a hyperparameter grid; expand it with grid_search");
    FederationHyperparams hp;
    hp.rounds = cfg.rounds;
    hp.clients_per_round = cfg.clients_per_round.front();
    hp.local_epochs = cfg.local_epochs.front();
    hp.batch_size = cfg.batch_sizes.front();
    hp.learning_rate = cfg.learning_rates.front();
    hp.aggregation = cfg.aggregation;
    hp.seed = cfg.seed;
    return hp;
}

} // namespace

ScenarioRun run_scenario_full(const ExperimentConfig& cfg, std::size_t threads) {
    Materialized mat = materialize(cfg);
    FederationHyperparams hp = singleton_hp(cfg);

    // centralized topologies train their lone clients every round; isolated
    // distributed training has every client update in every round
    std::size_t group_min = SIZE_MAX;
    {
        std::size_t max_task = 0;
        for (const Shard& s : mat.shards) max_task = std::max(max_task, static_cast<std::size_t>(s.task_id));
        std::vector<std::size_t> group_sizes(max_task + 1, 0);
        for (const Shard& s : mat.shards) group_sizes[static_cast<std::size_t>(s.task_id)] += 1;
        for (std::size_t g : group_sizes) group_min = std::min(group_min, g);
    }
    switch (cfg.scenario) {
        case ScenarioKind::CentralizedSeparate:
        case ScenarioKind::CentralizedJoint:
            hp.clients_per_round = 1;
            break;
        case ScenarioKind::DistributedSeparate:
            hp.clients_per_round = group_min;
            break;
        case ScenarioKind::DistributedSeparateFL:
        case ScenarioKind::DistributedMultiTaskFL:
            if (hp.clients_per_round > group_min)
                throw ConfigError("clients_per_round " + std::to_string(hp.clients_per_round) +
                                  " exceeds the smallest task group (" + std::to_string(group_min) +
                                  ")");
            break;
    }

    ScenarioRun run{make_simulation(std::move(mat.model), mat.loss, std::move(mat.shards), hp), {}};
    run.sim.threads = threads;
    run.sim.eval_mode = mat.eval_mode;
    if (!mat.task_names.empty()) run.sim.task_names = mat.task_names;
    run.log = run_training(run.sim);
    return run;
}

MetricsLog run_scenario(const ExperimentConfig& cfg, std::size_t threads) {
    return run_scenario_full(cfg, threads).log;
}

GridResult grid_search(const ExperimentConfig& cfg, std::size_t threads) {
    GridResult result;
    const std::size_t total = grid_size(cfg);
    result.points.reserve(total);
    result.logs.reserve(total);

    for (std::size_t i = 0; i < total; ++i) {
        const ExperimentConfig point_cfg = grid_point_config(cfg, i);
        GridPoint point;
        point.index = i;
        point.learning_rate = point_cfg.learning_rates.front();
        point.local_epochs = point_cfg.local_epochs.front();
        point.batch_size = point_cfg.batch_sizes.front();
        point.clients_per_round = point_cfg.clients_per_round.front();
        point.seed = point_cfg.seed;
        try {
            MetricsLog log = run_scenario(point_cfg, threads);
            point.final_accuracy = log.final_round().overall_accuracy;
            result.logs.push_back(std::move(log));
        } catch (const DivergedError&) {
            point.diverged = true;
            point.final_accuracy = std::numeric_limits<double>::quiet_NaN();
            result.logs.emplace_back();
        }
        result.points.push_back(point);
    }

    bool found = false;
    for (std::size_t i = 0; i < result.points.size(); ++i) {
        if (result.points[i].diverged) continue;
        if (!found || result.points[i].final_accuracy >
                          result.points[result.best].final_accuracy) {
            result.best = i;
            found = true;
        }
    }
    if (!found) throw ConfigError("grid_search: every grid point diverged");
    return result;
}

// ---------------------------------------------------------------------------
// metrics files
// ---------------------------------------------------------------------------

namespace {

std::FILE* open_for_write(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot write " + path);
    return f;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

} // namespace

void write_metrics(const MetricsLog& log, const std::string& dir) {
    ensure_dir(dir);
    std::FILE* f = open_for_write(dir + "/metrics.csv");
    std::fprintf(f, "round,overall_accuracy,overall_loss");
    for (const std::string& name : log.task_names)
        std::fprintf(f, ",acc_%s,loss_%s", name.c_str(), name.c_str());
    std::fprintf(f, "\n");
    for (const RoundRecord& rec : log.rounds) {
        std::fprintf(f, "%zu,%.12g,%.12g", rec.round, rec.overall_accuracy, rec.overall_loss);
        for (std::size_t t = 0; t < rec.task_accuracy.size(); ++t)
            std::fprintf(f, ",%.12g,%.12g", rec.task_accuracy[t], rec.task_loss[t]);
        std::fprintf(f, "\n");
    }
    std::fclose(f);

    // wall clock lives in its own file so metrics.csv is byte-stable across reruns
    f = open_for_write(dir + "/timing.csv");
    std::fprintf(f, "round,wall_ms\n");
    for (const RoundRecord& rec : log.rounds) std::fprintf(f, "%zu,%.3f\n", rec.round, rec.wall_ms);
    std::fclose(f);
}

MetricsLog read_metrics(const std::string& dir) {
    const std::string path = dir + "/metrics.csv";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");

    MetricsLog log;
    {
        const std::vector<std::string> header = split_list(line);
        if (header.size() < 3 || header[0] != "round")
            throw ParseError(path + ":1: unexpected header");
        for (std::size_t c = 3; c < header.size(); c += 2) {
            if (header[c].rfind("acc_", 0) != 0)
                throw ParseError(path + ":1: unexpected column '" + header[c] + "'");
            log.task_names.push_back(header[c].substr(4));
        }
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> fields = split_list(line);
        if (fields.size() != 3 + 2 * log.task_names.size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(3 + 2 * log.task_names.size()) + " fields");
        RoundRecord rec;
        rec.round = static_cast<std::size_t>(std::strtoull(fields[0].c_str(), nullptr, 10));
        rec.overall_accuracy = std::strtod(fields[1].c_str(), nullptr);
        rec.overall_loss = std::strtod(fields[2].c_str(), nullptr);
        for (std::size_t t = 0; t < log.task_names.size(); ++t) {
            rec.task_accuracy.push_back(std::strtod(fields[3 + 2 * t].c_str(), nullptr));
            rec.task_loss.push_back(std::strtod(fields[4 + 2 * t].c_str(), nullptr));
        }
        log.rounds.push_back(std::move(rec));
    }
    if (log.rounds.empty()) throw ParseError(path + ": no data rows");
    return log;
}

void write_grid_table(const GridResult& grid, const std::string& dir) {
    ensure_dir(dir);
    std::FILE* f = open_for_write(dir + "/grid.csv");
    std::fprintf(f,
                 "index,learning_rate,local_epochs,batch_size,clients_per_round,seed,"
                 "final_accuracy,diverged,selected\n");
    for (const GridPoint& p : grid.points)
        std::fprintf(f, "%zu,%.12g,%zu,%zu,%zu,%llu,%.12g,%d,%d\n", p.index, p.learning_rate,
                     p.local_epochs, p.batch_size, p.clients_per_round,
                     static_cast<unsigned long long>(p.seed), p.final_accuracy,
                     p.diverged ? 1 : 0, p.index == grid.best ? 1 : 0);
    std::fclose(f);
}

void write_report(const std::vector<std::pair<std::string, MetricsLog>>& runs,
                  const std::string& dir) {
    ensure_dir(dir);

    // union of task names, first-appearance order
    std::vector<std::string> names;
    for (const auto& [label, log] : runs)
        for (const std::string& name : log.task_names)
            if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);

    std::FILE* f = open_for_write(dir + "/report.csv");
    std::fprintf(f, "scenario");
    for (const std::string& name : names) std::fprintf(f, ",%s", name.c_str());
    std::fprintf(f, ",overall\n");
    for (const auto& [label, log] : runs) {
        std::fprintf(f, "%s", label.c_str());
        const RoundRecord& last = log.final_round();
        for (const std::string& name : names) {
            const auto it = std::find(log.task_names.begin(), log.task_names.end(), name);
            if (it == log.task_names.end()) {
                std::fprintf(f, ",");
            } else {
                const std::size_t t = static_cast<std::size_t>(it - log.task_names.begin());
                std::fprintf(f, ",%.12g", last.task_accuracy[t]);
            }
        }
        std::fprintf(f, ",%.12g\n", last.overall_accuracy);
    }
    std::fclose(f);

    // human-readable table, accuracy in percent, plus wall clock
    f = open_for_write(dir + "/report.txt");
    std::fprintf(f, "%-28s", "scenario");
    for (const std::string& name : names) std::fprintf(f, " %12s", name.c_str());
    std::fprintf(f, " %12s %10s\n", "overall", "wall_s");
    for (const auto& [label, log] : runs) {
        std::fprintf(f, "%-28s", label.c_str());
        const RoundRecord& last = log.final_round();
        double wall_ms = 0.0;
        for (const RoundRecord& rec : log.rounds) wall_ms += rec.wall_ms;
        for (const std::string& name : names) {
            const auto it = std::find(log.task_names.begin(), log.task_names.end(), name);
            if (it == log.task_names.end()) {
                std::fprintf(f, " %12s", "-");
            } else {
                const std::size_t t = static_cast<std::size_t>(it - log.task_names.begin());
                std::fprintf(f, " %12.2f", 100.0 * last.task_accuracy[t]);
            }
        }
        std::fprintf(f, " %12.2f %10.1f\n", 100.0 * last.overall_accuracy, wall_ms / 1000.0);
    }
    std::fclose(f);
}

MetricsLog run_to_dir(const ExperimentConfig& cfg, const std::string& out_dir,
                      std::size_t threads) {
    MetricsLog log = run_scenario(cfg, threads);
    write_metrics(log, out_dir);
    return log;
}

GridResult grid_to_dir(const ExperimentConfig& cfg, const std::string& out_dir,
                       std::size_t threads) {
    GridResult grid = grid_search(cfg, threads);
    ensure_dir(out_dir);
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        if (grid.points[i].diverged) continue;
        char sub[32];
        std::snprintf(sub, sizeof sub, "grid_%03zu", i);
        write_metrics(grid.logs[i], out_dir + "/" + sub);
    }
    write_grid_table(grid, out_dir);
    return grid;
}

} // namespace fedmtl
