#include "fedmtl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "fedmtl/errors.hpp"

namespace fedmtl {

namespace {

void parallel_for(std::size_t jobs, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || jobs <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(threads, jobs);
    pool.reserve(n - 1);
    for (std::size_t t = 0; t + 1 < n; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

bool fragment_finite(const WeightFragment& fragment) {
    for (const LayerParams& p : fragment) {
        if (!p.weights.all_finite()) return false;
        for (double b : p.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

// delta = before - after, entrywise, per layer of one group
std::vector<LayerGrad> fragment_delta(const WeightFragment& before, const WeightFragment& after) {
    std::vector<LayerGrad> delta(before.size());
    for (std::size_t l = 0; l < before.size(); ++l) {
        delta[l].dweights = Tensor2(before[l].weights.rows(), before[l].weights.cols());
        delta[l].dbias.assign(before[l].bias.size(), 0.0);
        for (std::size_t i = 0; i < before[l].weights.size(); ++i)
            delta[l].dweights.data()[i] = before[l].weights.data()[i] - after[l].weights.data()[i];
        for (std::size_t i = 0; i < before[l].bias.size(); ++i)
            delta[l].dbias[i] = before[l].bias[i] - after[l].bias[i];
    }
    return delta;
}

void apply_delta(WeightFragment& fragment, const std::vector<LayerGrad>& delta) {
    if (delta.size() != fragment.size())
        throw ShapeError("apply_delta: " + std::to_string(delta.size()) + " entries for " +
                         std::to_string(fragment.size()) + " layers");
    for (std::size_t l = 0; l < fragment.size(); ++l) {
        for (std::size_t i = 0; i < fragment[l].weights.size(); ++i)
            fragment[l].weights.data()[i] -= delta[l].dweights.data()[i];
        for (std::size_t i = 0; i < fragment[l].bias.size(); ++i)
            fragment[l].bias[i] -= delta[l].dbias[i];
    }
}

// Weighted sum over updates in ascending client-id order, one group member
// selector for common vs task entries.
std::vector<LayerGrad> weighted_aggregate(std::span<const GroupedGradients> updates,
                                          const std::vector<LayerGrad> GroupedGradients::*member,
                                          double denom) {
    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return updates[a].client_id < updates[b].client_id;
    });

    const std::vector<LayerGrad>& shape = updates[order[0]].*member;
    std::vector<LayerGrad> acc(shape.size());
    for (std::size_t l = 0; l < shape.size(); ++l) {
        acc[l].dweights = Tensor2(shape[l].dweights.rows(), shape[l].dweights.cols());
        acc[l].dbias.assign(shape[l].dbias.size(), 0.0);
    }
    for (std::size_t idx : order) {
        const GroupedGradients& u = updates[idx];
        const std::vector<LayerGrad>& entries = u.*member;
        if (entries.size() != acc.size())
            throw ShapeError("aggregate: update from client " + std::to_string(u.client_id) +
                             " has " + std::to_string(entries.size()) + " entries, expected " +
                             std::to_string(acc.size()));
        const double w = static_cast<double>(u.sample_count);
        if (w == 0.0) continue;
        for (std::size_t l = 0; l < acc.size(); ++l) {
            for (std::size_t i = 0; i < acc[l].dweights.size(); ++i)
                acc[l].dweights.data()[i] += w * entries[l].dweights.data()[i];
            for (std::size_t i = 0; i < acc[l].dbias.size(); ++i)
                acc[l].dbias[i] += w * entries[l].dbias[i];
        }
    }
    if (denom != 0.0) {
        const double inv = 1.0 / denom;
        for (LayerGrad& g : acc) {
            for (double& v : g.dweights.data()) v *= inv;
            for (double& v : g.dbias) v *= inv;
        }
    }
    return acc;
}

double selected_weight(std::span<const GroupedGradients> updates) {
    double w = 0.0;
    for (const GroupedGradients& u : updates) w += static_cast<double>(u.sample_count);
    return w;
}

} // namespace

const char* to_string(AggregationRule r) {
    switch (r) {
        case AggregationRule::WeightedMean: return "weighted_mean";
        case AggregationRule::PaperLiteral: return "paper_literal";
    }
    return "?";
}

AggregationRule aggregation_rule_from_string(const std::string& s) {
    if (s == "weighted_mean") return AggregationRule::WeightedMean;
    if (s == "paper_literal") return AggregationRule::PaperLiteral;
    throw ConfigError("unknown aggregation rule '" + s + "'");
}

RoundPlan sample_clients(Rng& rng, const std::vector<std::vector<int>>& groups, std::size_t k) {
    if (k == 0) throw ConfigError("sample_clients: k must be positive");
    RoundPlan plan;
    plan.selected.reserve(groups.size());
    for (std::size_t t = 0; t < groups.size(); ++t) {
        const std::vector<int>& group = groups[t];
        if (group.size() < k)
            throw ConfigError("sample_clients: group " + std::to_string(t) + " has " +
                              std::to_string(group.size()) + " clients, need " + std::to_string(k));
        // partial Fisher-Yates, then canonical ascending order
        std::vector<int> pool = group;
        for (std::size_t i = 0; i < k; ++i)
            std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        plan.selected.push_back(std::move(pool));
    }
    return plan;
}

GroupedGradients local_update(ClientState& client, const PartitionedModel& tmpl,
                              const WeightFragment& common, const WeightFragment& task,
                              LossKind loss, const FederationHyperparams& hp) {
    GroupedGradients out;
    out.client_id = client.client_id;
    out.sample_count = client.sample_count();

    PartitionedModel model = assemble_client_model(tmpl, common, task, client.personal);

    if (client.shard.train_size() == 0) {
        std::cerr << "fedmtl: client " << client.client_id << " has an empty shard, skipped\n";
        out.sample_count = 0;
        out.common = fragment_delta(common, common);
        out.task_specific = fragment_delta(task, task);
        return out;
    }

    const Tensor2& x = client.shard.train_x;
    const Tensor2& y = client.shard.train_y;
    const std::size_t n = x.rows();
    const std::size_t batch = std::min<std::size_t>(std::max<std::size_t>(hp.batch_size, 1), n);

    for (std::size_t epoch = 0; epoch < hp.local_epochs; ++epoch) {
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t end = std::min(n, start + batch);
            const Tensor2 bx = x.slice_rows(start, end);
            const Tensor2 by = y.slice_rows(start, end);
            try {
                const ForwardCache cache = compose_forward_cached(model, bx);
                const GradientSet grads = backward(model.layers, cache, by, loss);
                sgd_step(model, grads, hp.learning_rate);
            } catch (const ShapeError&) {
                throw;
            } catch (const ConfigError&) {
                throw;
            } catch (const Error&) {
                // numeric blow-up inside the step
                throw DivergedError(client.client_id,
                                    "client " + std::to_string(client.client_id) +
                                        " diverged in epoch " + std::to_string(epoch));
            }
        }
        for (std::size_t l = 0; l < model.size(); ++l) {
            if (model.frozen[l]) continue;
            if (!model.layers[l].weights.all_finite())
                throw DivergedError(client.client_id,
                                    "client " + std::to_string(client.client_id) +
                                        " diverged in epoch " + std::to_string(epoch));
        }
    }

    out.common = fragment_delta(common, extract_fragment(model, LayerGroup::Common));
    out.task_specific = fragment_delta(task, extract_fragment(model, LayerGroup::TaskSpecific));
    // personal layers stay on the client
    client.personal = extract_fragment(model, LayerGroup::Personal);
    return out;
}

std::vector<LayerGrad> aggregate_common(std::span<const GroupedGradients> updates,
                                        AggregationRule rule, std::size_t tasks,
                                        std::size_t clients_per_group,
                                        std::size_t total_samples) {
    if (updates.empty()) throw ConfigError("aggregate_common: empty update list");
    const double denom = rule == AggregationRule::WeightedMean
                             ? selected_weight(updates)
                             : static_cast<double>(tasks) * static_cast<double>(clients_per_group) *
                                   static_cast<double>(total_samples);
    return weighted_aggregate(updates, &GroupedGradients::common, denom);
}

std::vector<LayerGrad> aggregate_task(std::span<const GroupedGradients> updates,
                                      AggregationRule rule, std::size_t clients_per_group,
                                      std::size_t total_samples) {
    if (updates.empty()) throw ConfigError("aggregate_task: empty update list");
    const double denom = rule == AggregationRule::WeightedMean
                             ? selected_weight(updates)
                             : static_cast<double>(clients_per_group) *
                                   static_cast<double>(total_samples);
    return weighted_aggregate(updates, &GroupedGradients::task_specific, denom);
}

EvalResult evaluate(const PartitionedModel& model, const Tensor2& test_x, const Tensor2& test_y,
                    LossKind loss) {
    if (test_x.rows() == 0) throw ConfigError("evaluate: empty test set");
    const Tensor2 out = compose_forward(model, test_x);
    EvalResult result;
    result.samples = test_x.rows();
    result.loss = loss_value(out, test_y, loss);

    const bool multiclass =
        out.cols() > 1 && model.layers.back().activation == Activation::Softmax;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        if (multiclass) {
            std::size_t pred = 0, truth = 0;
            for (std::size_t c = 1; c < out.cols(); ++c) {
                if (out(r, c) > out(r, pred)) pred = c;
                if (test_y(r, c) > test_y(r, truth)) truth = c;
            }
            result.correct += pred == truth;
        } else {
            // fixed tie rule: predict class 1 at >= 0.5
            std::size_t hits = 0;
            for (std::size_t c = 0; c < out.cols(); ++c)
                hits += (out(r, c) >= 0.5 ? 1.0 : 0.0) == test_y(r, c);
            result.correct += hits == out.cols();
        }
    }
    result.accuracy = static_cast<double>(result.correct) / static_cast<double>(result.samples);
    return result;
}

EvalResult evaluate_binary_column(const PartitionedModel& model, const Tensor2& test_x,
                                  const Tensor2& test_y, std::size_t column) {
    if (test_x.rows() == 0) throw ConfigError("evaluate: empty test set");
    if (column >= test_y.cols())
        throw ShapeError("evaluate_binary_column: column " + std::to_string(column) +
                         " out of " + std::to_string(test_y.cols()));
    const Tensor2 out = compose_forward(model, test_x);
    if (column >= out.cols())
        throw ShapeError("evaluate_binary_column: model has " + std::to_string(out.cols()) +
                         " outputs");
    EvalResult result;
    result.samples = test_x.rows();
    double loss = 0.0;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        const double p = std::min(std::max(out(r, column), 1e-12), 1.0 - 1e-12);
        const double y = test_y(r, column);
        loss += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        result.correct += (out(r, column) >= 0.5 ? 1.0 : 0.0) == y;
    }
    result.loss = loss / static_cast<double>(result.samples);
    result.accuracy = static_cast<double>(result.correct) / static_cast<double>(result.samples);
    return result;
}

Simulation make_simulation(PartitionedModel model, LossKind loss, std::vector<Shard> shards,
                           const FederationHyperparams& hp) {
    if (shards.empty()) throw ConfigError("make_simulation: no shards");
    validate_loss_pairing(model.layers, loss);

    Simulation sim;
    sim.loss = loss;
    sim.hp = hp;
    sim.rng = Rng(derive_seed(hp.seed, 0xf0));

    int max_task = 0;
    for (const Shard& s : shards) max_task = std::max(max_task, s.task_id);
    const std::size_t tasks = static_cast<std::size_t>(max_task) + 1;

    sim.groups.assign(tasks, {});
    sim.clients.reserve(shards.size());
    std::sort(shards.begin(), shards.end(),
              [](const Shard& a, const Shard& b) { return a.client_id < b.client_id; });
    for (std::size_t i = 1; i < shards.size(); ++i)
        if (shards[i].client_id == shards[i - 1].client_id)
            throw ConfigError("make_simulation: duplicate client id " +
                              std::to_string(shards[i].client_id));
    const WeightFragment personal_init = extract_fragment(model, LayerGroup::Personal);
    std::size_t total = 0;
    for (Shard& s : shards) {
        if (s.task_id < 0) throw ConfigError("make_simulation: negative task id");
        ClientState client;
        client.client_id = s.client_id;
        client.task_id = s.task_id;
        client.personal = personal_init;
        total += s.train_size();
        sim.groups[static_cast<std::size_t>(s.task_id)].push_back(s.client_id);
        client.shard = std::move(s);
        sim.clients.push_back(std::move(client));
    }
    for (std::size_t t = 0; t < tasks; ++t) {
        if (sim.groups[t].empty())
            throw ConfigError("make_simulation: task group " + std::to_string(t) + " is empty");
        std::sort(sim.groups[t].begin(), sim.groups[t].end());
    }

    sim.server.common = extract_fragment(model, LayerGroup::Common);
    sim.server.task.assign(tasks, extract_fragment(model, LayerGroup::TaskSpecific));
    sim.server.total_samples = total;
    sim.server.round_index = 0;

    for (std::size_t t = 0; t < tasks; ++t) sim.task_names.push_back("task_" + std::to_string(t));
    sim.tmpl = std::move(model);
    return sim;
}

PartitionedModel client_model(const Simulation& sim, const ClientState& client) {
    return assemble_client_model(sim.tmpl, sim.server.common,
                                 sim.server.task[static_cast<std::size_t>(client.task_id)],
                                 client.personal);
}

namespace {

ClientState& client_by_id(Simulation& sim, int id) {
    auto it = std::lower_bound(sim.clients.begin(), sim.clients.end(), id,
                               [](const ClientState& c, int v) { return c.client_id < v; });
    if (it == sim.clients.end() || it->client_id != id)
        throw ConfigError("unknown client id " + std::to_string(id));
    return *it;
}

RoundRecord evaluate_round(const Simulation& sim) {
    RoundRecord rec;
    rec.round = sim.server.round_index;

    if (sim.eval_mode == EvalMode::PerOutputColumn) {
        const std::size_t columns = sim.tmpl.layers.back().out_width();
        rec.task_accuracy.assign(columns, 0.0);
        rec.task_loss.assign(columns, 0.0);
        std::vector<std::size_t> correct(columns, 0), samples(columns, 0);
        std::vector<double> loss_sum(columns, 0.0);
        std::size_t all_correct = 0, all_samples = 0;
        double all_loss = 0.0;
        for (const ClientState& client : sim.clients) {
            if (client.shard.test_size() == 0) continue;
            const PartitionedModel model = client_model(sim, client);
            for (std::size_t c = 0; c < columns; ++c) {
                const EvalResult r =
                    evaluate_binary_column(model, client.shard.test_x, client.shard.test_y, c);
                correct[c] += r.correct;
                samples[c] += r.samples;
                loss_sum[c] += r.loss * static_cast<double>(r.samples);
                all_correct += r.correct;
                all_samples += r.samples;
                all_loss += r.loss * static_cast<double>(r.samples);
            }
        }
        for (std::size_t c = 0; c < columns; ++c) {
            rec.task_accuracy[c] =
                samples[c] ? static_cast<double>(correct[c]) / static_cast<double>(samples[c])
                           : std::numeric_limits<double>::quiet_NaN();
            rec.task_loss[c] = samples[c] ? loss_sum[c] / static_cast<double>(samples[c])
                                          : std::numeric_limits<double>::quiet_NaN();
        }
        rec.overall_accuracy =
            all_samples ? static_cast<double>(all_correct) / static_cast<double>(all_samples) : 0.0;
        rec.overall_loss = all_samples ? all_loss / static_cast<double>(all_samples) : 0.0;
        return rec;
    }

    const std::size_t tasks = sim.groups.size();
    rec.task_accuracy.assign(tasks, 0.0);
    rec.task_loss.assign(tasks, 0.0);
    std::vector<std::size_t> correct(tasks, 0), samples(tasks, 0);
    std::vector<double> loss_sum(tasks, 0.0);
    for (const ClientState& client : sim.clients) {
        if (client.shard.test_size() == 0) continue;
        const PartitionedModel model = client_model(sim, client);
        const EvalResult r = evaluate(model, client.shard.test_x, client.shard.test_y, sim.loss);
        const std::size_t t = static_cast<std::size_t>(client.task_id);
        correct[t] += r.correct;
        samples[t] += r.samples;
        loss_sum[t] += r.loss * static_cast<double>(r.samples);
    }
    std::size_t all_correct = 0, all_samples = 0;
    double all_loss = 0.0;
    for (std::size_t t = 0; t < tasks; ++t) {
        all_correct += correct[t];
        all_samples += samples[t];
        all_loss += loss_sum[t];
        rec.task_accuracy[t] =
            samples[t] ? static_cast<double>(correct[t]) / static_cast<double>(samples[t])
                       : std::numeric_limits<double>::quiet_NaN();
        rec.task_loss[t] = samples[t] ? loss_sum[t] / static_cast<double>(samples[t])
                                      : std::numeric_limits<double>::quiet_NaN();
    }
    rec.overall_accuracy =
        all_samples ? static_cast<double>(all_correct) / static_cast<double>(all_samples) : 0.0;
    rec.overall_loss = all_samples ? all_loss / static_cast<double>(all_samples) : 0.0;
    return rec;
}

} // namespace

RoundRecord run_round(Simulation& sim) {
    const auto started = std::chrono::steady_clock::now();

    const RoundPlan plan = sample_clients(sim.rng, sim.groups, sim.hp.clients_per_round);

    // flat job list, task-major and id-ascending; every local update reads
    // only round-start server state, so order of execution is free
    struct Job {
        std::size_t task;
        int client_id;
    };
    std::vector<Job> jobs;
    for (std::size_t t = 0; t < plan.selected.size(); ++t)
        for (int id : plan.selected[t]) jobs.push_back({t, id});

    std::vector<GroupedGradients> updates(jobs.size());
    parallel_for(jobs.size(), sim.threads, [&](std::size_t i) {
        ClientState& client = client_by_id(sim, jobs[i].client_id);
        updates[i] = local_update(client, sim.tmpl, sim.server.common,
                                  sim.server.task[jobs[i].task], sim.loss, sim.hp);
    });

    const std::size_t tasks = sim.groups.size();
    const std::span<const GroupedGradients> all(updates);

    // task-specific aggregation per group; the flat order makes each group a
    // contiguous slice of K updates
    for (std::size_t t = 0; t < tasks; ++t) {
        const auto slice = all.subspan(t * sim.hp.clients_per_round, sim.hp.clients_per_round);
        const std::vector<LayerGrad> agg = aggregate_task(slice, sim.hp.aggregation,
                                                          sim.hp.clients_per_round,
                                                          sim.server.total_samples);
        apply_delta(sim.server.task[t], agg);
    }

    const std::vector<LayerGrad> agg = aggregate_common(all, sim.hp.aggregation, tasks,
                                                        sim.hp.clients_per_round,
                                                        sim.server.total_samples);
    apply_delta(sim.server.common, agg);

    if (!fragment_finite(sim.server.common))
        throw Error("run_round: server common weights diverged");

    sim.server.round_index += 1;

    RoundRecord rec = evaluate_round(sim);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    return rec;
}

MetricsLog run_training(Simulation& sim) {
    if (sim.hp.rounds == 0) throw ConfigError("run_training: rounds must be >= 1");
    MetricsLog log;
    log.task_names = sim.task_names;
    log.rounds.reserve(sim.hp.rounds);
    for (std::size_t r = 0; r < sim.hp.rounds; ++r) log.rounds.push_back(run_round(sim));
    return log;
}

namespace {

void write_fragment(std::FILE* f, const char* label, const WeightFragment& fragment) {
    std::fprintf(f, "%s %zu\n", label, fragment.size());
    for (const LayerParams& p : fragment) {
        std::fprintf(f, "layer %zu %zu\n", p.weights.rows(), p.weights.cols());
        for (std::size_t r = 0; r < p.weights.rows(); ++r) {
            const double* row = p.weights.row_ptr(r);
            for (std::size_t c = 0; c < p.weights.cols(); ++c)
                std::fprintf(f, c + 1 == p.weights.cols() ? "%a\n" : "%a ", row[c]);
        }
        std::fprintf(f, "bias");
        for (double b : p.bias) std::fprintf(f, " %a", b);
        std::fprintf(f, "\n");
    }
}

// istream num_get does not reliably parse hex floats, so tokens go through
// strtod by hand.
double read_double(std::istream& in, const std::string& path) {
    std::string token;
    if (!(in >> token)) throw ParseError(path + ": truncated numeric block");
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw ParseError(path + ": bad numeric token '" + token + "'");
    return v;
}

WeightFragment read_fragment(std::istream& in, const std::string& label, const std::string& path) {
    std::string word;
    std::size_t count = 0;
    if (!(in >> word >> count) || word != label)
        throw ParseError(path + ": expected '" + label + "' section, got '" + word + "'");
    WeightFragment fragment(count);
    for (LayerParams& p : fragment) {
        std::size_t rows = 0, cols = 0;
        if (!(in >> word >> rows >> cols) || word != "layer")
            throw ParseError(path + ": expected 'layer rows cols'");
        p.weights = Tensor2(rows, cols);
        for (double& v : p.weights.data()) v = read_double(in, path);
        if (!(in >> word) || word != "bias") throw ParseError(path + ": expected 'bias'");
        p.bias.assign(rows, 0.0);
        for (double& v : p.bias) v = read_double(in, path);
    }
    return fragment;
}

} // namespace

void save_checkpoint(const Simulation& sim, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot write " + path);
    std::fprintf(f, "fedmtl-checkpoint v1\n");
    std::fprintf(f, "round %zu\n", sim.server.round_index);
    std::fprintf(f, "total_samples %zu\n", sim.server.total_samples);
    std::ostringstream rng_state;
    rng_state << sim.rng;
    std::fprintf(f, "rng %s\n", rng_state.str().c_str());
    write_fragment(f, "common", sim.server.common);
    std::fprintf(f, "tasks %zu\n", sim.server.task.size());
    for (const WeightFragment& fragment : sim.server.task) write_fragment(f, "task", fragment);
    std::fprintf(f, "clients %zu\n", sim.clients.size());
    for (const ClientState& client : sim.clients) {
        std::fprintf(f, "client %d\n", client.client_id);
        write_fragment(f, "personal", client.personal);
    }
    std::fprintf(f, "end\n");
    std::fclose(f);
}

void load_checkpoint(Simulation& sim, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string word, version;
    if (!(in >> word >> version) || word != "fedmtl-checkpoint" || version != "v1")
        throw ParseError(path + ": not a fedmtl-checkpoint v1 file");
    std::size_t round = 0, total = 0;
    if (!(in >> word >> round) || word != "round") throw ParseError(path + ": expected 'round'");
    if (!(in >> word >> total) || word != "total_samples")
        throw ParseError(path + ": expected 'total_samples'");
    if (!(in >> word) || word != "rng") throw ParseError(path + ": expected 'rng'");
    Rng rng(0);
    if (!(in >> rng)) throw ParseError(path + ": bad rng state");

    WeightFragment common = read_fragment(in, "common", path);
    std::size_t tasks = 0;
    if (!(in >> word >> tasks) || word != "tasks") throw ParseError(path + ": expected 'tasks'");
    if (tasks != sim.server.task.size())
        throw ParseError(path + ": checkpoint has " + std::to_string(tasks) +
                         " task groups, simulation has " + std::to_string(sim.server.task.size()));
    std::vector<WeightFragment> task_fragments;
    task_fragments.reserve(tasks);
    for (std::size_t t = 0; t < tasks; ++t) task_fragments.push_back(read_fragment(in, "task", path));

    std::size_t clients = 0;
    if (!(in >> word >> clients) || word != "clients")
        throw ParseError(path + ": expected 'clients'");
    if (clients != sim.clients.size())
        throw ParseError(path + ": checkpoint has " + std::to_string(clients) +
                         " clients, simulation has " + std::to_string(sim.clients.size()));
    std::vector<std::pair<int, WeightFragment>> personal;
    personal.reserve(clients);
    for (std::size_t c = 0; c < clients; ++c) {
        int id = 0;
        if (!(in >> word >> id) || word != "client") throw ParseError(path + ": expected 'client'");
        personal.emplace_back(id, read_fragment(in, "personal", path));
    }
    if (!(in >> word) || word != "end") throw ParseError(path + ": missing 'end'");

    sim.server.round_index = round;
    sim.server.total_samples = total;
    sim.server.common = std::move(common);
    sim.server.task = std::move(task_fragments);
    sim.rng = rng;
    for (auto& [id, fragment] : personal) client_by_id(sim, id).personal = std::move(fragment);
}

} // namespace fedmtl
