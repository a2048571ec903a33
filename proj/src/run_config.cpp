#include "varigrad/run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "varigrad/errors.hpp"
#include "varigrad/names.hpp"

namespace varigrad {

namespace {

std::string_view trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r");
    return text.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view expected,
                            std::string_view text) {
    throw ConfigError("config field '" + std::string(key) + "': expected " +
                      std::string(expected) + ", got '" + std::string(text) + "'");
}

std::uint64_t to_u64(std::string_view key, std::string_view text) {
    std::uint64_t value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || end != text.data() + text.size())
        bad_value(key, "a non-negative integer", text);
    return value;
}

std::size_t to_size(std::string_view key, std::string_view text) {
    return static_cast<std::size_t>(to_u64(key, text));
}

double to_double(std::string_view key, std::string_view text) {
    double value = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || end != text.data() + text.size() ||
        !std::isfinite(value))
        bad_value(key, "a finite number", text);
    return value;
}

bool to_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    bad_value(key, "true or false", text);
}

std::vector<std::string_view> split_list(std::string_view text) {
    std::vector<std::string_view> items;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const auto item = trim(text.substr(0, comma));
        if (!item.empty()) items.push_back(item);
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return items;
}

template <typename T, typename Parse>
std::vector<T> to_list(std::string_view text, Parse parse) {
    std::vector<T> out;
    for (auto item : split_list(text)) out.push_back(parse(item));
    return out;
}

std::string format_double(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

template <typename T, typename Format>
std::string join(const std::vector<T>& items, Format format) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += ',';
        out += format(item);
    }
    return out;
}

// Rethrows a name-parsing error with the field prefix.
template <typename Fn>
auto with_field(std::string_view key, Fn fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError("config field '" + std::string(key) + "': " + e.what());
    }
}

struct Field {
    std::string_view key;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define VG_SIZE(name, member)                                                         \
    Field {                                                                           \
        name, [](RunConfig& c, std::string_view v) { c.member = to_size(name, v); }, \
            [](const RunConfig& c) { return std::to_string(c.member); }               \
    }
#define VG_DOUBLE(name, member)                                                         \
    Field {                                                                             \
        name, [](RunConfig& c, std::string_view v) { c.member = to_double(name, v); }, \
            [](const RunConfig& c) { return format_double(c.member); }                  \
    }
#define VG_BOOL(name, member)                                                         \
    Field {                                                                           \
        name, [](RunConfig& c, std::string_view v) { c.member = to_bool(name, v); }, \
            [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); } \
    }
#define VG_STRING(name, member)                                                          \
    Field {                                                                              \
        name, [](RunConfig& c, std::string_view v) { c.member = std::string(v); },      \
            [](const RunConfig& c) { return c.member; }                                  \
    }
#define VG_ENUM(name, member, parse)                                                      \
    Field {                                                                               \
        name,                                                                             \
            [](RunConfig& c, std::string_view v) {                                        \
                c.member = with_field(name, [&] { return parse(v); });                    \
            },                                                                            \
            [](const RunConfig& c) { return std::string(to_string(c.member)); }          \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        VG_STRING("dataset", dataset),
        VG_STRING("data_dir", data_dir),
        VG_SIZE("train_subset", train_subset),
        Field{"validation_size",
              [](RunConfig& c, std::string_view v) {
                  if (v == "auto") c.validation_size.reset();
                  else c.validation_size = to_size("validation_size", v);
              },
              [](const RunConfig& c) {
                  return c.validation_size ? std::to_string(*c.validation_size)
                                           : std::string("auto");
              }},
        VG_SIZE("synthetic_n_per_class", synthetic_n_per_class),
        VG_SIZE("synthetic_test_per_class", synthetic_test_per_class),
        VG_SIZE("synthetic_d", synthetic_d),
        VG_SIZE("synthetic_c", synthetic_c),
        VG_DOUBLE("synthetic_separation", synthetic_separation),
        Field{"synthetic_seed",
              [](RunConfig& c, std::string_view v) { c.synthetic_seed = to_u64("synthetic_seed", v); },
              [](const RunConfig& c) { return std::to_string(c.synthetic_seed); }},
        Field{"hidden",
              [](RunConfig& c, std::string_view v) {
                  c.hidden = to_list<std::size_t>(v, [](auto s) { return to_size("hidden", s); });
              },
              [](const RunConfig& c) {
                  return join(c.hidden, [](std::size_t w) { return std::to_string(w); });
              }},
        VG_ENUM("activation", activation, parse_activation),
        VG_ENUM("noise", noise, parse_noise_kind),
        Field{"input_noise",
              [](RunConfig& c, std::string_view v) {
                  if (v == "same") c.input_noise.reset();
                  else c.input_noise = with_field("input_noise", [&] { return parse_noise_kind(v); });
              },
              [](const RunConfig& c) {
                  return c.input_noise ? std::string(to_string(*c.input_noise))
                                       : std::string("same");
              }},
        VG_DOUBLE("input_dropout_p", input_dropout_p),
        VG_DOUBLE("hidden_dropout_p", hidden_dropout_p),
        VG_ENUM("granularity", granularity, parse_granularity),
        VG_BOOL("adaptive_alpha", adaptive_alpha),
        VG_ENUM("mode", mode, parse_estimator_mode),
        VG_ENUM("kl", kl, parse_kl_mode),
        VG_DOUBLE("kl_scale", kl_scale),
        VG_DOUBLE("lr", adam.step_size),
        VG_DOUBLE("beta1", adam.beta1),
        VG_DOUBLE("beta2", adam.beta2),
        VG_DOUBLE("adam_eps", adam.epsilon),
        VG_DOUBLE("avg_decay", adam.averaging_decay),
        VG_SIZE("epochs", epochs),
        VG_SIZE("M", batch_size),
        Field{"seed", [](RunConfig& c, std::string_view v) { c.seed = to_u64("seed", v); },
              [](const RunConfig& c) { return std::to_string(c.seed); }},
        VG_STRING("out", out),
        VG_SIZE("patience", patience),
        VG_BOOL("with_replacement", with_replacement),
        VG_STRING("prediction", prediction),
        VG_SIZE("mc_draws", mc_draws),
        VG_STRING("checkpoint", checkpoint),
        VG_BOOL("fresh_train", fresh_train),
        VG_SIZE("var_R", var_repetitions),
        VG_SIZE("var_M", var_batch_size),
        VG_STRING("var_layers", var_layers),
        Field{"var_modes",
              [](RunConfig& c, std::string_view v) {
                  c.var_modes = to_list<EstimatorMode>(v, [](auto s) {
                      return with_field("var_modes", [&] { return parse_estimator_mode(s); });
                  });
              },
              [](const RunConfig& c) {
                  return join(c.var_modes, [](EstimatorMode m) { return std::string(to_string(m)); });
              }},
        Field{"bench_K",
              [](RunConfig& c, std::string_view v) {
                  c.bench_inputs = to_list<std::size_t>(v, [](auto s) { return to_size("bench_K", s); });
              },
              [](const RunConfig& c) {
                  return join(c.bench_inputs, [](std::size_t k) { return std::to_string(k); });
              }},
        VG_SIZE("bench_L", bench_outputs),
        VG_SIZE("bench_M", bench_batch_size),
        VG_SIZE("bench_trials", bench_trials),
        VG_DOUBLE("fd_h", fd_step),
        VG_SIZE("fd_batch", fd_batch),
        VG_SIZE("kl_grid_points", kl_grid_points),
        VG_DOUBLE("kl_alpha_min", kl_alpha_min),
        Field{"kl_alphas",
              [](RunConfig& c, std::string_view v) {
                  c.kl_alphas = to_list<double>(v, [](auto s) { return to_double("kl_alphas", s); });
              },
              [](const RunConfig& c) { return join(c.kl_alphas, format_double); }},
    };
    return table;
}

#undef VG_SIZE
#undef VG_DOUBLE
#undef VG_BOOL
#undef VG_STRING
#undef VG_ENUM

const Field& find_field(std::string_view key) {
    for (const auto& field : fields())
        if (field.key == key) return field;
    throw ConfigError("unknown config field '" + std::string(key) + "'");
}

void require(bool ok, std::string_view key, const std::string& message) {
    if (!ok) throw ConfigError("config field '" + std::string(key) + "': " + message);
}

}  // namespace

std::vector<std::string_view> config_keys() {
    std::vector<std::string_view> keys;
    for (const auto& field : fields()) keys.push_back(field.key);
    return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
    find_field(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, std::string_view key) {
    return find_field(key).get(config);
}

void apply_config_text(RunConfig& config, std::string_view text, std::string_view origin) {
    std::size_t line_number = 0;
    while (!text.empty()) {
        const auto newline = text.find('\n');
        std::string_view line = text.substr(0, newline);
        text = newline == std::string_view::npos ? std::string_view{} : text.substr(newline + 1);
        ++line_number;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = std::string(origin) + ":" + std::to_string(line_number) + ": ";
        if (eq == std::string_view::npos) {
            throw ConfigError(where + "expected 'key = value', got '" + std::string(line) + "'");
        }
        try {
            set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    apply_config_text(config, buffer.str(), path.string());
}

void validate(const RunConfig& c) {
    require(c.dataset == "synthetic" || c.dataset == "mnist", "dataset",
            "expected synthetic or mnist, got '" + c.dataset + "'");
    if (c.dataset == "synthetic") {
        require(c.synthetic_n_per_class > 0, "synthetic_n_per_class", "must be positive");
        require(c.synthetic_d > 0, "synthetic_d", "must be positive");
        require(c.synthetic_c >= 2, "synthetic_c", "need at least 2 classes");
        require(c.synthetic_separation >= 0.0, "synthetic_separation", "must be non-negative");
    }
    for (std::size_t w : c.hidden) require(w > 0, "hidden", "widths must be positive");
    auto check_p = [](double p, std::string_view key) {
        require(p >= 0.0 && p < 1.0, key, "dropout probability must lie in [0, 1)");
    };
    check_p(c.input_dropout_p, "input_dropout_p");
    check_p(c.hidden_dropout_p, "hidden_dropout_p");
    const NoiseKind input_kind = c.input_noise.value_or(c.noise);
    auto check_variational_rate = [](NoiseKind kind, double p, std::string_view key) {
        if (kind == NoiseKind::TypeA || kind == NoiseKind::TypeB ||
            kind == NoiseKind::GaussianDropoutFixed) {
            const double alpha = p / (1.0 - p);
            require(alpha > 0.0 && alpha <= 1.0, key,
                    "Gaussian noise needs 0 < p <= 0.5 so that 0 < alpha <= 1");
        }
    };
    check_variational_rate(input_kind, c.input_dropout_p, "input_dropout_p");
    if (!c.hidden.empty()) check_variational_rate(c.noise, c.hidden_dropout_p, "hidden_dropout_p");
    if (c.granularity == Granularity::PerWeight) {
        require(input_kind != NoiseKind::TypeA && (c.hidden.empty() || c.noise != NoiseKind::TypeA),
                "granularity", "per-weight alpha is not defined for typeA noise");
    }
    require(c.kl_scale > 0.0, "kl_scale", "must be positive");
    require(c.adam.step_size > 0.0, "lr", "must be positive");
    require(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0, "beta1", "must lie in [0, 1)");
    require(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0, "beta2", "must lie in [0, 1)");
    require(c.adam.epsilon > 0.0, "adam_eps", "must be positive");
    require(c.adam.averaging_decay >= 0.0 && c.adam.averaging_decay < 1.0, "avg_decay",
            "must lie in [0, 1)");
    require(c.batch_size > 0, "M", "must be positive");
    require(c.prediction == "mean" || c.prediction == "mc", "prediction",
            "expected mean or mc, got '" + c.prediction + "'");
    require(c.mc_draws > 0, "mc_draws", "must be positive");
    require(!c.out.empty(), "out", "output directory must be set");
    require(c.var_repetitions >= 2, "var_R", "need at least 2 repetitions");
    require(c.var_batch_size > 0, "var_M", "must be positive");
    require(!c.var_modes.empty(), "var_modes", "need at least one mode");
    require(!c.bench_inputs.empty(), "bench_K", "need at least one width");
    for (std::size_t k : c.bench_inputs) require(k > 0, "bench_K", "widths must be positive");
    require(c.bench_outputs > 0, "bench_L", "must be positive");
    require(c.bench_batch_size > 0, "bench_M", "must be positive");
    require(c.bench_trials >= 3, "bench_trials", "need at least 3 trials");
    require(c.fd_step > 0.0, "fd_h", "must be positive");
    require(c.fd_batch > 0, "fd_batch", "must be positive");
    require(c.kl_grid_points >= 1, "kl_grid_points", "must be positive");
    require(c.kl_alpha_min > 0.0 && c.kl_alpha_min <= 1.0, "kl_alpha_min",
            "must lie in (0, 1]");
}

std::string serialize(const RunConfig& config) {
    std::string out;
    for (const auto& field : fields()) {
        out += field.key;
        out += " = ";
        out += field.get(config);
        out += '\n';
    }
    return out;
}

double noise_rate_for(NoiseKind kind, double p) {
    switch (kind) {
        case NoiseKind::BinaryDropout: return p;
        case NoiseKind::None: return 0.0;
        default: return p / (1.0 - p);
    }
}

MlpConfig mlp_config(const RunConfig& config, std::size_t input_dim, std::size_t classes) {
    MlpConfig mlp;
    mlp.widths.push_back(input_dim);
    mlp.widths.insert(mlp.widths.end(), config.hidden.begin(), config.hidden.end());
    mlp.widths.push_back(classes);
    mlp.activation = config.activation;
    const NoiseKind input_kind = config.input_noise.value_or(config.noise);
    mlp.input_noise = {input_kind, noise_rate_for(input_kind, config.input_dropout_p)};
    mlp.hidden_noise = {config.noise, noise_rate_for(config.noise, config.hidden_dropout_p)};
    mlp.granularity = config.granularity;
    return mlp;
}

ElboOptions elbo_options(const RunConfig& config, std::size_t dataset_size) {
    ElboOptions options;
    options.mode = config.mode;
    options.kl_mode = config.kl;
    options.kl_scale = config.kl_scale;
    options.dataset_size = dataset_size;
    options.compute_gradients = true;
    return options;
}

PredictionMode prediction_mode(const RunConfig& config) {
    if (config.prediction == "mc") return PredictionMode::mc_average(config.mc_draws, config.seed + 4);
    return PredictionMode::mean_weights();
}

}  // namespace varigrad
