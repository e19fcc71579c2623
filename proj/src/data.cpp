#include "fedmtl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "fedmtl/errors.hpp"
#include "fedmtl/rng.hpp"

namespace fedmtl {

namespace {

// Whitespace- or comma-separated doubles. Throws with the 1-based line number.
std::vector<double> parse_numeric_line(const std::string& line, const std::string& path,
                                       std::size_t line_no) {
    std::vector<double> values;
    const char* p = line.c_str();
    while (*p) {
        while (*p == ' ' || *p == '\t' || *p == ',' || *p == '\r') ++p;
        if (!*p) break;
        char* end = nullptr;
        const double v = std::strtod(p, &end);
        if (end == p)
            throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric field '" +
                             std::string(p, std::min<std::size_t>(8, std::strlen(p))) + "'");
        values.push_back(v);
        p = end;
    }
    return values;
}

std::vector<std::vector<double>> read_numeric_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> values = parse_numeric_line(line, path, line_no);
        if (!rows.empty() && values.size() != rows.front().size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(rows.front().size()) + " fields, got " +
                             std::to_string(values.size()));
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");
    return rows;
}

void split_rows(const std::vector<std::size_t>& rows, double train_fraction,
                std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
    const std::size_t n = rows.size();
    std::size_t train_n = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n > 0 && train_n == 0) train_n = 1;
    if (train_n > n) train_n = n;
    train.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(train_n));
    test.assign(rows.begin() + static_cast<std::ptrdiff_t>(train_n), rows.end());
}

Tensor2 gather_rows(const Tensor2& src, const std::vector<std::size_t>& rows) {
    Tensor2 out(rows.size(), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* s = src.row_ptr(rows[r]);
        double* d = out.row_ptr(r);
        for (std::size_t c = 0; c < src.cols(); ++c) d[c] = s[c];
    }
    return out;
}

} // namespace

Shard make_shard_from_rows(const TabularDataset& data, int client_id, int task_id,
                           const std::vector<std::size_t>& train_rows,
                           const std::vector<std::size_t>& test_rows, int label_column) {
    if (label_column >= 0 && static_cast<std::size_t>(label_column) >= data.labels.cols())
        throw ConfigError("make_shard_from_rows: label column " + std::to_string(label_column) +
                          " out of " + std::to_string(data.labels.cols()));
    Shard shard;
    shard.client_id = client_id;
    shard.task_id = task_id;
    shard.train_rows = train_rows;
    shard.test_rows = test_rows;
    shard.train_x = gather_rows(data.features, train_rows);
    shard.test_x = gather_rows(data.features, test_rows);
    if (label_column < 0) {
        shard.train_y = gather_rows(data.labels, train_rows);
        shard.test_y = gather_rows(data.labels, test_rows);
    } else {
        const std::size_t c = static_cast<std::size_t>(label_column);
        shard.train_y = gather_rows(data.labels, train_rows).column(c);
        shard.test_y = gather_rows(data.labels, test_rows).column(c);
    }
    return shard;
}

namespace {

// a shard carries only the label column of its task, unless all tasks share
// one label space
Shard make_shard(const TabularDataset& data, int client_id, int task_id,
                 const std::vector<std::size_t>& train_rows,
                 const std::vector<std::size_t>& test_rows) {
    return make_shard_from_rows(data, client_id, task_id, train_rows, test_rows,
                                data.shared_labels ? -1 : task_id);
}

} // namespace

TabularDataset gen_synthetic_multitask(const SyntheticConfig& cfg) {
    if (cfg.samples == 0 || cfg.latent_dim == 0 || cfg.feature_dim == 0 || cfg.tasks == 0)
        throw ConfigError("gen_synthetic_multitask: dimensions must be positive");
    if (cfg.label_noise < 0.0 || cfg.label_noise >= 0.5)
        throw ConfigError("gen_synthetic_multitask: label_noise must be in [0, 0.5)");

    Rng rng(derive_seed(cfg.seed, 0x5d));

    // fixed random map latent -> features
    Tensor2 mix(cfg.feature_dim, cfg.latent_dim);
    for (double& v : mix.data()) v = rng.normal() / std::sqrt(static_cast<double>(cfg.latent_dim));

    // per-task rule parameters
    const std::size_t rule_hidden = 8;
    std::vector<std::vector<double>> task_w(cfg.tasks);
    std::vector<std::vector<double>> task_v(cfg.tasks);
    for (std::size_t t = 0; t < cfg.tasks; ++t) {
        if (cfg.rule == SyntheticConfig::Rule::Linear) {
            task_w[t].resize(cfg.latent_dim);
            for (double& v : task_w[t]) v = rng.normal();
        } else {
            task_w[t].resize(rule_hidden * cfg.latent_dim);
            for (double& v : task_w[t]) v = rng.normal();
            task_v[t].resize(rule_hidden);
            for (double& v : task_v[t]) v = rng.normal();
        }
    }

    TabularDataset data;
    data.features = Tensor2(cfg.samples, cfg.feature_dim);
    data.labels = Tensor2(cfg.samples, cfg.tasks);
    data.shared_labels = false;

    std::vector<double> latent(cfg.latent_dim);
    for (std::size_t r = 0; r < cfg.samples; ++r) {
        for (double& z : latent) z = rng.normal();
        double* x = data.features.row_ptr(r);
        for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
            const double* m = mix.row_ptr(d);
            double acc = 0.0;
            for (std::size_t k = 0; k < cfg.latent_dim; ++k) acc += m[k] * latent[k];
            x[d] = acc;
        }
        for (std::size_t t = 0; t < cfg.tasks; ++t) {
            double score = 0.0;
            if (cfg.rule == SyntheticConfig::Rule::Linear) {
                for (std::size_t k = 0; k < cfg.latent_dim; ++k) score += task_w[t][k] * latent[k];
            } else {
                // odd in the latent vector (tanh units, no biases), so the
                // label marginal of every task is exactly 1/2
                for (std::size_t h = 0; h < rule_hidden; ++h) {
                    double pre = 0.0;
                    for (std::size_t k = 0; k < cfg.latent_dim; ++k)
                        pre += task_w[t][h * cfg.latent_dim + k] * latent[k];
                    score += task_v[t][h] * std::tanh(pre);
                }
            }
            double label = score > 0.0 ? 1.0 : 0.0;
            if (cfg.label_noise > 0.0 && rng.uniform() < cfg.label_noise) label = 1.0 - label;
            data.labels(r, t) = label;
        }
    }

    // standardize features to zero mean, unit variance per column
    for (std::size_t c = 0; c < cfg.feature_dim; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < cfg.samples; ++r) mean += data.features(r, c);
        mean /= static_cast<double>(cfg.samples);
        double var = 0.0;
        for (std::size_t r = 0; r < cfg.samples; ++r) {
            const double d = data.features(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(cfg.samples);
        const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
        for (std::size_t r = 0; r < cfg.samples; ++r)
            data.features(r, c) = (data.features(r, c) - mean) * scale;
    }

    for (std::size_t t = 0; t < cfg.tasks; ++t) data.task_names.push_back("task_" + std::to_string(t));
    return data;
}

TabularDataset load_tabular(const std::string& path, const TabularSchema& schema) {
    const std::vector<std::vector<double>> rows = read_numeric_file(path);
    const std::size_t n = rows.size();
    const std::size_t width = rows.front().size();

    std::vector<std::size_t> feature_cols = schema.feature_cols;
    if (feature_cols.empty()) {
        std::vector<bool> taken(width, false);
        for (std::size_t c : schema.label_cols) {
            if (c >= width) throw ConfigError(path + ": label column " + std::to_string(c) + " out of range");
            taken[c] = true;
        }
        if (schema.label_col >= 0) {
            if (static_cast<std::size_t>(schema.label_col) >= width)
                throw ConfigError(path + ": label column out of range");
            taken[static_cast<std::size_t>(schema.label_col)] = true;
        }
        if (schema.subject_col >= 0) {
            if (static_cast<std::size_t>(schema.subject_col) >= width)
                throw ConfigError(path + ": subject column out of range");
            taken[static_cast<std::size_t>(schema.subject_col)] = true;
        }
        for (std::size_t c = 0; c < width; ++c)
            if (!taken[c]) feature_cols.push_back(c);
    } else {
        for (std::size_t c : feature_cols)
            if (c >= width) throw ConfigError(path + ": feature column " + std::to_string(c) + " out of range");
    }

    TabularDataset data;
    data.features = Tensor2(n, feature_cols.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < feature_cols.size(); ++i)
            data.features(r, i) = rows[r][feature_cols[i]];

    // class labels, either inline or from a separate index-aligned file
    std::vector<double> class_values;
    if (!schema.labels_path.empty()) {
        const auto label_rows = read_numeric_file(schema.labels_path);
        if (label_rows.size() != n)
            throw ParseError(schema.labels_path + ": " + std::to_string(label_rows.size()) +
                             " label rows for " + std::to_string(n) + " data rows");
        for (const auto& lr : label_rows) class_values.push_back(lr.front());
    } else if (schema.label_col >= 0) {
        for (std::size_t r = 0; r < n; ++r)
            class_values.push_back(rows[r][static_cast<std::size_t>(schema.label_col)]);
    }

    if (!class_values.empty()) {
        if (schema.classes == 0) throw ConfigError(path + ": class labels need schema.classes > 0");
        data.labels = Tensor2(n, schema.classes);
        data.shared_labels = true;
        for (std::size_t r = 0; r < n; ++r) {
            const double v = class_values[r];
            const long k = std::lround(v);
            if (static_cast<double>(k) != v || k < 1 || k > static_cast<long>(schema.classes))
                throw ParseError((schema.labels_path.empty() ? path : schema.labels_path) + ":" +
                                 std::to_string(r + 1) + ": label " + std::to_string(v) +
                                 " outside 1.." + std::to_string(schema.classes));
            data.labels(r, static_cast<std::size_t>(k - 1)) = 1.0;
        }
        for (std::size_t c = 0; c < schema.classes; ++c)
            data.task_names.push_back("class_" + std::to_string(c + 1));
    } else if (!schema.label_cols.empty()) {
        data.labels = Tensor2(n, schema.label_cols.size());
        data.shared_labels = false;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i = 0; i < schema.label_cols.size(); ++i) {
                const double v = rows[r][schema.label_cols[i]];
                if (v != 0.0 && v != 1.0)
                    throw ParseError(path + ":" + std::to_string(r + 1) + ": binary label column " +
                                     std::to_string(schema.label_cols[i]) + " holds " + std::to_string(v));
                data.labels(r, i) = v;
            }
        for (std::size_t i = 0; i < schema.label_cols.size(); ++i)
            data.task_names.push_back("task_" + std::to_string(i));
    } else {
        throw ConfigError(path + ": schema declares no labels");
    }

    if (!schema.subjects_path.empty()) {
        const auto subject_rows = read_numeric_file(schema.subjects_path);
        if (subject_rows.size() != n)
            throw ParseError(schema.subjects_path + ": " + std::to_string(subject_rows.size()) +
                             " subject rows for " + std::to_string(n) + " data rows");
        for (const auto& sr : subject_rows) data.subjects.push_back(static_cast<int>(std::lround(sr.front())));
    } else if (schema.subject_col >= 0) {
        for (std::size_t r = 0; r < n; ++r)
            data.subjects.push_back(static_cast<int>(std::lround(rows[r][static_cast<std::size_t>(schema.subject_col)])));
    }

    return data;
}

TabularDataset load_har(const std::string& dir) {
    auto load_part = [&](const std::string& part) {
        TabularSchema schema;
        schema.classes = 6;
        schema.labels_path = dir + "/" + part + "/y_" + part + ".txt";
        schema.subjects_path = dir + "/" + part + "/subject_" + part + ".txt";
        return load_tabular(dir + "/" + part + "/X_" + part + ".txt", schema);
    };
    TabularDataset train = load_part("train");
    TabularDataset test = load_part("test");
    if (train.dim() != test.dim())
        throw ParseError(dir + ": train/test feature widths differ");

    TabularDataset merged;
    merged.shared_labels = true;
    merged.task_names = train.task_names;
    merged.features = Tensor2(train.n() + test.n(), train.dim());
    merged.labels = Tensor2(train.n() + test.n(), train.labels.cols());
    for (std::size_t r = 0; r < train.n(); ++r) {
        for (std::size_t c = 0; c < train.dim(); ++c) merged.features(r, c) = train.features(r, c);
        for (std::size_t c = 0; c < train.labels.cols(); ++c) merged.labels(r, c) = train.labels(r, c);
    }
    for (std::size_t r = 0; r < test.n(); ++r) {
        for (std::size_t c = 0; c < test.dim(); ++c) merged.features(train.n() + r, c) = test.features(r, c);
        for (std::size_t c = 0; c < test.labels.cols(); ++c) merged.labels(train.n() + r, c) = test.labels(r, c);
    }
    merged.subjects = train.subjects;
    merged.subjects.insert(merged.subjects.end(), test.subjects.begin(), test.subjects.end());
    return merged;
}

namespace {

std::vector<std::size_t> shuffled_row_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x9a));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.index(i)]);
    return order;
}

} // namespace

void pooled_train_test_rows(std::size_t n, double train_fraction, std::uint64_t seed,
                            std::vector<std::size_t>& train_rows,
                            std::vector<std::size_t>& test_rows) {
    const std::vector<std::size_t> order = shuffled_row_order(n, seed);
    split_rows(order, train_fraction, train_rows, test_rows);
}

std::vector<Shard> partition_uniform(const TabularDataset& data, std::size_t clients,
                                     std::size_t tasks, double train_fraction,
                                     std::uint64_t seed) {
    if (clients == 0 || tasks == 0) throw ConfigError("partition_uniform: clients and tasks must be positive");
    if (clients % tasks != 0)
        throw ConfigError("partition_uniform: " + std::to_string(clients) +
                          " clients do not divide into " + std::to_string(tasks) + " equal groups");
    if (!data.shared_labels && tasks > data.labels.cols())
        throw ConfigError("partition_uniform: " + std::to_string(tasks) + " tasks but only " +
                          std::to_string(data.labels.cols()) + " label columns");

    // one seeded shuffle of all rows
    const std::vector<std::size_t> order = shuffled_row_order(data.n(), seed);

    const std::size_t per_group = clients / tasks;
    const std::size_t base = data.n() / clients;
    const std::size_t extra = data.n() % clients;

    std::vector<Shard> shards;
    shards.reserve(clients);
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < clients; ++c) {
        const std::size_t size = base + (c < extra ? 1 : 0);
        std::vector<std::size_t> mine(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                      order.begin() + static_cast<std::ptrdiff_t>(cursor + size));
        cursor += size;
        std::vector<std::size_t> train_rows, test_rows;
        split_rows(mine, train_fraction, train_rows, test_rows);
        const int task_id = static_cast<int>(c / per_group);
        shards.push_back(make_shard(data, static_cast<int>(c), task_id, train_rows, test_rows));
    }
    return shards;
}

std::vector<Shard> partition_by_subject(const TabularDataset& data, double train_fraction,
                                        std::uint64_t seed) {
    if (data.subjects.size() != data.n())
        throw ConfigError("partition_by_subject: dataset has no subject column");

    std::map<int, std::vector<std::size_t>> by_subject;
    for (std::size_t r = 0; r < data.n(); ++r) by_subject[data.subjects[r]].push_back(r);

    std::vector<Shard> shards;
    shards.reserve(by_subject.size());
    int next_id = 0;
    for (auto& [subject, rows] : by_subject) {
        Rng rng(derive_seed(seed, 0xb0 + static_cast<std::uint64_t>(subject)));
        for (std::size_t i = rows.size(); i > 1; --i)
            std::swap(rows[i - 1], rows[rng.index(i)]);
        std::vector<std::size_t> train_rows, test_rows;
        split_rows(rows, train_fraction, train_rows, test_rows);
        shards.push_back(make_shard(data, next_id, next_id, train_rows, test_rows));
        ++next_id;
    }
    return shards;
}

Tensor2 load_frozen_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": missing header");
    const std::vector<double> header = parse_numeric_line(line, path, 1);
    if (header.size() != 2 || header[0] < 1 || header[1] < 1)
        throw ParseError(path + ":1: header must be 'rows cols'");
    const std::size_t rows = static_cast<std::size_t>(header[0]);
    const std::size_t cols = static_cast<std::size_t>(header[1]);

    Tensor2 out(rows, cols);
    std::size_t r = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (r >= rows) throw ParseError(path + ":" + std::to_string(line_no) + ": more rows than header declares");
        const std::vector<double> values = parse_numeric_line(line, path, line_no);
        if (values.size() != cols)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(cols) + " values, got " + std::to_string(values.size()));
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = values[c];
        ++r;
    }
    if (r != rows)
        throw ParseError(path + ": header declares " + std::to_string(rows) + " rows, file has " +
                         std::to_string(r));
    return out;
}

TabularDataset with_embeddings(const TabularDataset& data, const Tensor2& embeddings) {
    if (embeddings.rows() != data.n())
        throw ShapeError("with_embeddings: " + std::to_string(embeddings.rows()) +
                         " embedding rows for " + std::to_string(data.n()) + " dataset rows");
    TabularDataset out = data;
    out.features = embeddings;
    return out;
}

} // namespace fedmtl
