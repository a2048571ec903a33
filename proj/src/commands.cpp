#include "varigrad/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "varigrad/checkpoint.hpp"
#include "varigrad/diagnostics.hpp"
#include "varigrad/errors.hpp"
#include "varigrad/training.hpp"

namespace varigrad {

namespace {

namespace fs = std::filesystem;

std::string format_double(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

fs::path prepare_output(const RunConfig& config) {
    const fs::path dir = config.out;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::ofstream echo(dir / "config.txt");
    if (!echo) throw IoError("cannot write " + (dir / "config.txt").string());
    echo << serialize(config);
    return dir;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

}  // namespace

void cmd_train(const RunConfig& config, std::ostream& log) {
    validate(config);
    const DataSplits data = load_splits(config);
    const fs::path dir = prepare_output(config);
    const TrainResult result = train_model(config, data, &log);

    auto metrics = open_output(dir / "metrics.csv");
    write_metrics_csv(metrics, result.history, noisy_layer_indices(result.model));
    save_checkpoint(dir / "checkpoint.txt", result.model);

    nlohmann::ordered_json summary;
    summary["epochs_run"] = result.history.size();
    summary["best_epoch"] = result.best_epoch;
    if (result.best_epoch > 0) {
        summary["best_val_error"] = result.history[result.best_epoch - 1].val_error;
    }
    summary["test_error"] = result.test_error ? nlohmann::ordered_json(*result.test_error)
                                              : nlohmann::ordered_json(nullptr);
    summary["prediction"] = config.prediction;
    auto summary_file = open_output(dir / "summary.json");
    summary_file << summary.dump(2) << '\n';
    log << "wrote " << (dir / "metrics.csv").string() << '\n';
}

std::vector<std::size_t> resolve_layers(std::string_view selection, std::size_t layer_count) {
    std::vector<std::size_t> layers;
    auto add = [&](std::size_t l) {
        if (std::find(layers.begin(), layers.end(), l) == layers.end()) layers.push_back(l);
    };
    std::string_view rest = selection;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        std::string token(rest.substr(0, comma));
        token.erase(std::remove(token.begin(), token.end(), ' '), token.end());
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        if (token.empty()) continue;
        if (token == "first") {
            add(0);
        } else if (token == "last") {
            add(layer_count - 1);
        } else if (token == "all") {
            for (std::size_t l = 0; l < layer_count; ++l) add(l);
        } else {
            std::size_t index = 0;
            const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), index);
            if (ec != std::errc() || end != token.data() + token.size() || index >= layer_count) {
                throw ConfigError("config field 'var_layers': '" + token +
                                  "' is not first, last, all or a layer index below " +
                                  std::to_string(layer_count));
            }
            add(index);
        }
    }
    if (layers.empty()) throw ConfigError("config field 'var_layers': no layers selected");
    return layers;
}

void cmd_variance(const RunConfig& config, std::ostream& log) {
    validate(config);
    if (config.checkpoint.empty() && !config.fresh_train) {
        throw ConfigError("config field 'checkpoint': variance needs a checkpoint or fresh_train = true");
    }
    if (!config.checkpoint.empty() && !fs::exists(config.checkpoint)) {
        throw ConfigError("config field 'checkpoint': no such file " + config.checkpoint);
    }
    const DataSplits data = load_splits(config);
    const fs::path dir = prepare_output(config);

    std::optional<Mlp> model;
    std::string tag;
    if (!config.checkpoint.empty()) {
        model = load_checkpoint(config.checkpoint);
        tag = "checkpoint";
    } else {
        model = train_model(config, data, &log).model;
        save_checkpoint(dir / "checkpoint.txt", *model);
        tag = "epochs=" + std::to_string(config.epochs);
    }
    if (model->input_dim() != data.train.dim()) {
        throw ConfigError("config field 'checkpoint': model expects " +
                          std::to_string(model->input_dim()) + " features, data has " +
                          std::to_string(data.train.dim()));
    }

    const auto layers = resolve_layers(config.var_layers, model->layers().size());
    VarianceOptions options;
    options.batch_size = config.var_batch_size;
    options.repetitions = config.var_repetitions;
    options.with_replacement = config.with_replacement;
    options.seed = config.seed;
    options.kl_mode = config.kl;
    options.kl_scale = config.kl_scale;
    options.epoch_tag = tag;
    const VarianceReport report = variance_table(*model, data.train, layers, config.var_modes, options);

    auto csv = open_output(dir / "variance.csv");
    write_variance_csv(csv, report);
    write_variance_csv(log, report);
}

std::vector<double> kl_alpha_grid(const RunConfig& config) {
    std::vector<double> alphas = config.kl_alphas;
    if (alphas.empty()) {
        const std::size_t n = config.kl_grid_points;
        const double lo = std::log(config.kl_alpha_min);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = n == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(n - 1);
            alphas.push_back(i + 1 == n ? 1.0 : std::exp(lo * (1.0 - t)));
        }
    }
    for (double a : alphas) {
        if (!(a > 0.0) || a > 1.0) {
            throw DomainError("kl-table: alpha " + format_double(a) + " outside (0, 1]");
        }
    }
    return alphas;
}

void write_kl_table_csv(std::ostream& out, std::span<const double> alphas) {
    out << "log_alpha,neg_kl_polynomial,neg_kl_lower_bound,neg_kl_quadrature\n";
    for (double a : alphas) {
        const double la = a == 1.0 ? 0.0 : std::log(a);
        out << format_double(la) << ',' << format_double(neg_kl_per_unit(la, KlMode::Polynomial))
            << ',' << format_double(neg_kl_per_unit(la, KlMode::LowerBound)) << ','
            << format_double(neg_kl_per_unit(la, KlMode::Quadrature)) << '\n';
    }
}

void cmd_kl_table(const RunConfig& config, std::ostream& log) {
    validate(config);
    const auto alphas = kl_alpha_grid(config);
    const fs::path dir = prepare_output(config);
    auto csv = open_output(dir / "kl_table.csv");
    write_kl_table_csv(csv, alphas);
    log << "wrote " << alphas.size() << " rows to " << (dir / "kl_table.csv").string() << '\n';
}

void cmd_bench(const RunConfig& config, std::ostream& log) {
    validate(config);
    const fs::path dir = prepare_output(config);
    SpeedOptions options;
    options.trials = config.bench_trials;
    options.seed = config.seed;
    SpeedReport combined;
    for (std::size_t k : config.bench_inputs) {
        const SpeedReport report = estimator_speed_bench(k, config.bench_outputs,
                                                         config.bench_batch_size,
                                                         config.var_modes, options);
        combined.hardware_note = report.hardware_note;
        combined.entries.insert(combined.entries.end(), report.entries.begin(),
                                report.entries.end());
        for (const auto& e : report.entries) {
            log << "K=" << k << ' ' << to_string(e.mode) << " median " << e.median_seconds
                << " s\n";
        }
    }
    auto json = open_output(dir / "bench.json");
    write_speed_json(json, combined);
}

void cmd_gradcheck(const RunConfig& config, std::ostream& log) {
    validate(config);
    const DataSplits data = load_splits(config);
    const fs::path dir = prepare_output(config);
    RngStream init_rng(config.seed, 1);
    Mlp model = Mlp::build(mlp_config(config, data.train.dim(), data.train.classes), init_rng);
    // Central differences need room on both sides of log_alpha below the alpha <= 1 bound.
    const double ceiling = -10.0 * config.fd_step;
    for (auto& layer : model.layers())
        for (double& la : layer.log_alpha().values()) la = std::min(la, ceiling);

    const Dataset batch = slice(data.train, 0, std::min(config.fd_batch, data.train.size()));
    AuditObjective objective;
    objective.mode = config.mode;
    objective.kl_mode = config.kl;
    objective.kl_scale = config.kl_scale;
    objective.noise_seed = config.seed;
    AuditOptions options;
    options.step = config.fd_step;
    const auto groups = finite_difference_audit(model, batch.X, batch.y, objective, options);

    auto csv = open_output(dir / "gradcheck.csv");
    csv << "group,entries,max_relative_error,max_abs_error\n";
    for (const auto& g : groups) {
        csv << g.name << ',' << g.entries << ',' << format_double(g.max_relative_error) << ','
            << format_double(g.max_abs_error) << '\n';
        log << g.name << " max relative error " << g.max_relative_error << '\n';
    }
}

int exit_code_for(const std::exception& error) {
    if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const DomainError*>(&error) ||
        dynamic_cast<const ConstraintError*>(&error) || dynamic_cast<const ShapeError*>(&error))
        return 2;
    if (dynamic_cast<const NumericError*>(&error) || dynamic_cast<const OptimizerError*>(&error) ||
        dynamic_cast<const StatisticsError*>(&error))
        return 3;
    if (dynamic_cast<const IoError*>(&error) || dynamic_cast<const FormatError*>(&error) ||
        dynamic_cast<const ConsistencyError*>(&error))
        return 4;
    return 1;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Variational dropout and local reparameterization toolkit", "varigrad"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "key = value configuration file");

    const auto keys = config_keys();
    std::map<std::string, std::string> overrides;
    std::vector<std::pair<std::string, CLI::Option*>> flag_options;
    for (auto key : keys) {
        std::string names = "--" + std::string(key);
        std::string dashed(key);
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        if (dashed != key) names += ",--" + dashed;
        auto* option = app.add_option(names, overrides[std::string(key)],
                                      "overrides config key " + std::string(key));
        flag_options.emplace_back(std::string(key), option);
    }

    using Command = void (*)(const RunConfig&, std::ostream&);
    const std::vector<std::pair<std::string, Command>> commands = {
        {"train", cmd_train},     {"variance", cmd_variance}, {"kl-table", cmd_kl_table},
        {"bench", cmd_bench},     {"gradcheck", cmd_gradcheck},
    };
    for (const auto& [name, fn] : commands) app.add_subcommand(name)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        RunConfig config;
        if (!config_path.empty()) apply_config_file(config, config_path);
        for (const auto& [key, option] : flag_options)
            if (option->count() > 0) set_config_value(config, key, overrides[key]);
        validate(config);
        for (const auto& [name, fn] : commands) {
            if (app.got_subcommand(name)) fn(config, out);
        }
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace varigrad
