#include "varigrad/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "varigrad/errors.hpp"

namespace varigrad {

namespace {

const Matrix& selected_gradient(const LayerGradients& grads, ParamSelector::Target target) {
    switch (target) {
        case ParamSelector::Target::Theta: return grads.theta;
        case ParamSelector::Target::LogAlpha: return grads.log_alpha;
        case ParamSelector::Target::Bias: return grads.bias;
    }
    return grads.theta;
}

// Mean over columns of the per-column sample variance across the rows of `draws`,
// skipping rows in [skip_begin, skip_end). Welford updates keep identical draws at exactly 0.
double mean_column_variance(const Matrix& draws, std::size_t skip_begin, std::size_t skip_end) {
    const std::size_t cols = draws.cols();
    std::vector<double> mean(cols, 0.0);
    std::vector<double> m2(cols, 0.0);
    double count = 0.0;
    for (std::size_t r = 0; r < draws.rows(); ++r) {
        if (r >= skip_begin && r < skip_end) continue;
        count += 1.0;
        auto row = draws.row(r);
        for (std::size_t c = 0; c < cols; ++c) {
            const double delta = row[c] - mean[c];
            mean[c] += delta / count;
            m2[c] += delta * (row[c] - mean[c]);
        }
    }
    double total = 0.0;
    for (double v : m2) total += v / (count - 1.0);
    return total / static_cast<double>(cols);
}

double jackknife_std_error(const Matrix& draws) {
    const std::size_t reps = draws.rows();
    const std::size_t groups = std::min<std::size_t>(10, reps / 2);
    if (groups < 2) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> estimates;
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t begin = g * reps / groups;
        const std::size_t end = (g + 1) * reps / groups;
        estimates.push_back(mean_column_variance(draws, begin, end));
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(groups);
    double spread = 0.0;
    for (double e : estimates) spread += (e - mean) * (e - mean);
    const double g = static_cast<double>(groups);
    return std::sqrt((g - 1.0) / g * spread);
}

VarianceReport measure_variances(const Mlp& model, const Dataset& data, EstimatorMode mode,
                                 std::span<const ParamSelector> selectors,
                                 const VarianceOptions& options) {
    if (options.repetitions < 2) {
        throw StatisticsError("gradient variance needs at least 2 repetitions, got " +
                              std::to_string(options.repetitions));
    }
    if (options.batch_size > data.size()) {
        throw ConfigError("variance: M = " + std::to_string(options.batch_size) +
                          " exceeds dataset size " + std::to_string(data.size()));
    }
    std::vector<Matrix> draws;
    for (const auto& sel : selectors) {
        if (sel.layer >= model.layers().size()) {
            throw ConfigError("variance: layer " + std::to_string(sel.layer) + " out of range");
        }
        const auto& layer = model.layers()[sel.layer];
        if (sel.target == ParamSelector::Target::LogAlpha && !layer.has_variational_alpha()) {
            throw ConfigError("variance: layer " + std::to_string(sel.layer) +
                              " has no log_alpha");
        }
        const std::size_t width = sel.target == ParamSelector::Target::Theta ? layer.theta().size()
                                  : sel.target == ParamSelector::Target::Bias
                                      ? layer.bias().size()
                                      : layer.log_alpha().size();
        draws.emplace_back(options.repetitions, width);
    }

    MinibatchSampler sampler(data.size(), options.batch_size, options.with_replacement,
                             RngStream(options.seed, 0));
    ElboOptions elbo;
    elbo.mode = mode;
    elbo.kl_mode = options.kl_mode;
    elbo.kl_scale = options.kl_scale;
    elbo.dataset_size = data.size();
    elbo.compute_gradients = true;

    for (std::size_t r = 0; r < options.repetitions; ++r) {
        auto indices = sampler.next_indices();
        // Row order must not matter, so identical index sets give bit-identical gradients.
        std::sort(indices.begin(), indices.end());
        const Dataset batch = select(data, indices);
        RngStream noise(options.seed + 1, r);
        const ElboResult result = elbo_minibatch(model, batch.X, batch.y, elbo, noise);
        for (std::size_t s = 0; s < selectors.size(); ++s) {
            const Matrix& g = selected_gradient(result.gradients[selectors[s].layer],
                                                selectors[s].target);
            std::copy(g.values().begin(), g.values().end(), draws[s].row(r).begin());
        }
    }

    VarianceReport report;
    for (std::size_t s = 0; s < selectors.size(); ++s) {
        VarianceEntry entry;
        entry.layer = selectors[s].layer;
        entry.mode = mode;
        entry.batch_size = options.batch_size;
        entry.repetitions = options.repetitions;
        entry.with_replacement = options.with_replacement;
        entry.seed = options.seed;
        entry.epoch_tag = options.epoch_tag;
        entry.mean_variance = mean_column_variance(draws[s], 0, 0);
        entry.std_error = jackknife_std_error(draws[s]);
        report.push_back(std::move(entry));
    }
    return report;
}

std::string format_double(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

}  // namespace

VarianceEntry gradient_variance(const Mlp& model, const Dataset& data, EstimatorMode mode,
                                const ParamSelector& selector, const VarianceOptions& options) {
    return measure_variances(model, data, mode, std::span(&selector, 1), options).front();
}

VarianceReport variance_table(const Mlp& model, const Dataset& data,
                              std::span<const std::size_t> layers,
                              std::span<const EstimatorMode> modes,
                              const VarianceOptions& options) {
    std::vector<ParamSelector> selectors;
    for (std::size_t layer : layers) selectors.push_back({layer, ParamSelector::Target::Theta});
    std::vector<VarianceReport> per_mode;
    for (EstimatorMode mode : modes) {
        per_mode.push_back(measure_variances(model, data, mode, selectors, options));
    }
    VarianceReport report;
    for (std::size_t s = 0; s < selectors.size(); ++s)
        for (const auto& cells : per_mode) report.push_back(cells[s]);
    return report;
}

VarianceReport variance_scaling_curve(const Mlp& model, const Dataset& data, EstimatorMode mode,
                                      std::span<const std::size_t> batch_sizes,
                                      const ParamSelector& selector,
                                      const VarianceOptions& options) {
    for (std::size_t m : batch_sizes) {
        if (m > data.size()) {
            throw ConfigError("scaling curve: M = " + std::to_string(m) +
                              " exceeds dataset size " + std::to_string(data.size()));
        }
    }
    VarianceReport report;
    for (std::size_t m : batch_sizes) {
        VarianceOptions cell = options;
        cell.batch_size = m;
        report.push_back(gradient_variance(model, data, mode, selector, cell));
    }
    return report;
}

void write_variance_csv(std::ostream& out, const VarianceReport& report) {
    out << "layer,mode,M,R,mean_variance,stderr\n";
    for (const auto& e : report) {
        out << e.layer << ',' << to_string(e.mode) << ',' << e.batch_size << ','
            << e.repetitions << ',' << format_double(e.mean_variance) << ','
            << format_double(e.std_error) << '\n';
    }
}

double objective_value(const Mlp& model, const Matrix& inputs, std::span<const int> labels,
                       const AuditObjective& objective) {
    RngStream noise(objective.noise_seed, 0);
    if (objective.kind == AuditObjective::Kind::SquaredErrorProbe) {
        const Matrix logits = network_forward(model, inputs, objective.mode, noise).logits;
        double total = 0.0;
        for (double v : logits.values()) total += 0.5 * v * v;
        return total;
    }
    ElboOptions options;
    options.mode = objective.mode;
    options.kl_mode = objective.kl_mode;
    options.kl_scale = objective.kl_scale;
    options.dataset_size = objective.dataset_size == 0 ? inputs.rows() : objective.dataset_size;
    options.compute_gradients = false;
    return elbo_minibatch(model, inputs, labels, options, noise).report.elbo;
}

std::vector<AuditGroup> finite_difference_audit(const Mlp& model, const Matrix& inputs,
                                                std::span<const int> labels,
                                                const AuditObjective& objective,
                                                const AuditOptions& options) {
    if (!(options.step > 0.0)) throw DomainError("finite-difference step must be positive");

    ModelGradients analytic;
    RngStream noise(objective.noise_seed, 0);
    if (objective.kind == AuditObjective::Kind::SquaredErrorProbe) {
        const NetworkPass pass = network_forward(model, inputs, objective.mode, noise);
        analytic = network_backward(model, pass, pass.logits);
    } else {
        ElboOptions elbo;
        elbo.mode = objective.mode;
        elbo.kl_mode = objective.kl_mode;
        elbo.kl_scale = objective.kl_scale;
        elbo.dataset_size = objective.dataset_size == 0 ? inputs.rows() : objective.dataset_size;
        analytic = elbo_minibatch(model, inputs, labels, elbo, noise).gradients;
    }

    Mlp probe = model;
    const auto slots = probe.parameter_slots(true);
    const auto grads = gradient_slots(model, analytic, true);
    std::vector<AuditGroup> groups;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        AuditGroup group{slots[s].name, slots[s].value->size(), 0.0, 0.0};
        Matrix& value = *slots[s].value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + options.step;
            const double up = objective_value(probe, inputs, labels, objective);
            value[i] = saved - options.step;
            const double down = objective_value(probe, inputs, labels, objective);
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            const double exact = (*grads[s])[i];
            const double abs_error = std::abs(exact - numeric);
            const double scale_ref =
                std::max({std::abs(exact), std::abs(numeric), options.relative_floor});
            group.max_abs_error = std::max(group.max_abs_error, abs_error);
            group.max_relative_error = std::max(group.max_relative_error, abs_error / scale_ref);
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

SpeedReport estimator_speed_bench(std::size_t inputs, std::size_t outputs, std::size_t batch_size,
                                  std::span<const EstimatorMode> modes,
                                  const SpeedOptions& options) {
    if (options.trials < 3) throw ConfigError("speed bench needs at least 3 trials");
    RngStream init(options.seed, 0);
    const DenseVariationalLayer layer(inputs, outputs, NoiseSpec::type_b(options.initial_alpha),
                                      Granularity::PerLayer, init);
    const Matrix input = sample_standard_normal(batch_size, inputs, init);
    const Matrix grad_output = sample_standard_normal(batch_size, outputs, init);

    SpeedReport report;
    report.hardware_note = "single-threaded; " +
                           std::to_string(std::thread::hardware_concurrency()) +
                           " hardware threads available";
    using Clock = std::chrono::steady_clock;
    for (EstimatorMode mode : modes) {
        auto run_once = [&](std::uint64_t draw) {
            RngStream noise(options.seed + 1, draw);
            const LayerOutput out = layer.forward(input, mode, noise);
            const LayerGradients grads = layer.backward(out.cache, grad_output);
            return grads.theta[0];
        };
        volatile double sink = run_once(0);
        std::vector<double> seconds;
        for (std::size_t t = 0; t < options.trials; ++t) {
            const auto start = Clock::now();
            sink = run_once(t + 1);
            seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
        }
        (void)sink;
        std::sort(seconds.begin(), seconds.end());
        SpeedEntry entry;
        entry.mode = mode;
        entry.inputs = inputs;
        entry.outputs = outputs;
        entry.batch_size = batch_size;
        entry.trials = options.trials;
        const std::size_t n = seconds.size();
        entry.median_seconds =
            n % 2 == 1 ? seconds[n / 2] : 0.5 * (seconds[n / 2 - 1] + seconds[n / 2]);
        entry.min_seconds = seconds.front();
        entry.max_seconds = seconds.back();
        report.entries.push_back(entry);
    }
    return report;
}

void write_speed_json(std::ostream& out, const SpeedReport& report) {
    nlohmann::ordered_json doc;
    doc["hardware_note"] = report.hardware_note;
    doc["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : report.entries) {
        nlohmann::ordered_json item;
        item["mode"] = std::string(to_string(e.mode));
        item["K"] = e.inputs;
        item["L"] = e.outputs;
        item["M"] = e.batch_size;
        item["trials"] = e.trials;
        item["median_seconds"] = e.median_seconds;
        item["min_seconds"] = e.min_seconds;
        item["max_seconds"] = e.max_seconds;
        doc["entries"].push_back(std::move(item));
    }
    out << doc.dump(2) << '\n';
}

}  // namespace varigrad
