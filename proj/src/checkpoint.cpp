#include "varigrad/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "varigrad/errors.hpp"
#include "varigrad/names.hpp"

namespace varigrad {

namespace {

constexpr const char* kHeader = "varigrad-checkpoint v1";

std::string format_value(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

void write_matrix(std::ostream& out, const char* name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) out << ' ';
            out << format_value(row[c]);
        }
        out << '\n';
    }
}

class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}

    std::string word() {
        std::string token;
        if (!(in_ >> token)) throw FormatError("checkpoint: unexpected end of file");
        return token;
    }

    void expect(std::string_view keyword) {
        const std::string token = word();
        if (token != keyword) {
            throw FormatError("checkpoint: expected '" + std::string(keyword) + "', found '" +
                              token + "'");
        }
    }

    std::size_t count() {
        const std::string token = word();
        std::size_t value = 0;
        const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc() || end != token.data() + token.size())
            throw FormatError("checkpoint: expected a count, found '" + token + "'");
        return value;
    }

    double number() {
        const std::string token = word();
        double value = 0.0;
        const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc() || end != token.data() + token.size())
            throw FormatError("checkpoint: expected a number, found '" + token + "'");
        return value;
    }

    Matrix matrix(std::string_view name) {
        expect(name);
        const std::size_t rows = count();
        const std::size_t cols = count();
        Matrix m(rows, cols);
        for (double& v : m.values()) v = number();
        return m;
    }

private:
    std::istream& in_;
};

}  // namespace

void write_checkpoint(std::ostream& out, const Mlp& model) {
    out << kHeader << '\n';
    out << "activation " << to_string(model.activation()) << '\n';
    out << "layers " << model.layers().size() << '\n';
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const auto& layer = model.layers()[l];
        out << "layer " << l << " inputs " << layer.inputs() << " outputs " << layer.outputs()
            << " noise " << to_string(layer.noise().kind) << ' '
            << format_value(layer.noise().rate) << " granularity "
            << to_string(layer.posterior().granularity) << '\n';
        write_matrix(out, "theta", layer.theta());
        write_matrix(out, "log_alpha", layer.log_alpha());
        write_matrix(out, "bias", layer.bias());
    }
    out << "end\n";
}

Mlp read_checkpoint(std::istream& in) {
    std::string header;
    std::getline(in, header);
    if (header != kHeader) {
        throw FormatError("checkpoint: header '" + header + "', expected '" + kHeader + "'");
    }
    TokenReader reader(in);
    reader.expect("activation");
    const Activation activation = parse_activation(reader.word());
    reader.expect("layers");
    const std::size_t count = reader.count();
    std::vector<DenseVariationalLayer> layers;
    for (std::size_t l = 0; l < count; ++l) {
        reader.expect("layer");
        if (reader.count() != l) throw FormatError("checkpoint: layers out of order");
        reader.expect("inputs");
        const std::size_t inputs = reader.count();
        reader.expect("outputs");
        const std::size_t outputs = reader.count();
        reader.expect("noise");
        NoiseSpec noise;
        noise.kind = parse_noise_kind(reader.word());
        noise.rate = reader.number();
        reader.expect("granularity");
        DropoutPosterior posterior;
        posterior.granularity = parse_granularity(reader.word());
        posterior.theta = reader.matrix("theta");
        posterior.log_alpha = reader.matrix("log_alpha");
        Matrix bias = reader.matrix("bias");
        if (posterior.theta.rows() != inputs || posterior.theta.cols() != outputs) {
            throw FormatError("checkpoint: layer " + std::to_string(l) + " theta is " +
                              posterior.theta.shape_string() + ", header says " +
                              std::to_string(inputs) + "x" + std::to_string(outputs));
        }
        layers.emplace_back(std::move(posterior), std::move(bias), noise);
    }
    reader.expect("end");
    return Mlp(std::move(layers), activation);
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& model) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    write_checkpoint(out, model);
    if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    return read_checkpoint(in);
}

}  // namespace varigrad
