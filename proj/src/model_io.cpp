#include <bit>
#include <cstring>

#include <zlib.h>

#include "urbanemu/io.hpp"
#include "urbanemu/mlp.hpp"

namespace urbanemu::mlp {

namespace {

constexpr char kMagic[8] = {'U', 'E', 'M', 'U', 'M', 'L', 'P', '\0'};

using Kind = ModelFileError::Kind;

class ByteWriter {
public:
    void u8(std::uint8_t x) { buf_.push_back(static_cast<char>(x)); }
    void u32(std::uint32_t x) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(x >> (8 * i)));
    }
    void u64(std::uint64_t x) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(x >> (8 * i)));
    }
    void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_ += s;
    }
    void strings(const std::vector<std::string>& v) {
        u32(static_cast<std::uint32_t>(v.size()));
        for (const auto& s : v) str(s);
    }
    void raw(std::string_view s) { buf_ += s; }
    std::string& bytes() { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return x;
    }
    std::uint64_t u64() {
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return x;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::vector<std::string> strings() {
        const std::uint32_t n = u32();
        need(n);  // every string needs at least its length prefix
        std::vector<std::string> v;
        for (std::uint32_t i = 0; i < n; ++i) v.push_back(str());
        return v;
    }
    [[nodiscard]] bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw ModelFileError(Kind::format, "model payload ends unexpectedly");
        }
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

void write_norm(ByteWriter& w, const NormStats& s) {
    w.u32(static_cast<std::uint32_t>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
        w.f64(s.mean[i]);
        w.f64(s.std[i]);
    }
}

NormStats read_norm(ByteReader& r, const std::vector<std::string>& names) {
    NormStats s;
    const std::uint32_t n = r.u32();
    if (n != 0 && n != names.size()) {
        throw ModelFileError(Kind::schema, "normalization statistics do not match the stored schema");
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        s.mean.push_back(r.f64());
        s.std.push_back(r.f64());
    }
    if (n != 0) {
        s.names = names;
    }
    return s;
}

}  // namespace

std::string serialize(const MlpModel& model) {
    model.validate();
    ByteWriter p;
    p.u8(static_cast<std::uint8_t>(model.activation));
    p.strings(model.schema.inputs);
    p.strings(model.schema.input_units);
    p.strings(model.schema.outputs);
    p.strings(model.schema.output_units);
    write_norm(p, model.input_norm);
    write_norm(p, model.output_norm);
    p.u32(static_cast<std::uint32_t>(model.metadata.size()));
    for (const auto& [k, v] : model.metadata) {
        p.str(k);
        p.str(v);
    }
    p.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const auto& layer : model.layers) {
        p.u32(static_cast<std::uint32_t>(layer.weights.rows()));
        p.u32(static_cast<std::uint32_t>(layer.weights.cols()));
        // Column-major (outputs x inputs), as held in memory.
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) p.f64(layer.weights.data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) p.f64(layer.bias[i]);
    }

    ByteWriter file;
    file.raw(std::string_view(kMagic, sizeof kMagic));
    file.u32(kModelFormatVersion);
    file.u64(p.bytes().size());
    file.raw(p.bytes());
    file.u32(crc_of(p.bytes()));
    return std::move(file.bytes());
}

MlpModel deserialize(std::string_view bytes) {
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw ModelFileError(Kind::magic, "not a model file (bad magic)");
    }
    ByteReader header(bytes.substr(sizeof kMagic));
    std::uint32_t version = 0;
    std::uint64_t length = 0;
    try {
        version = header.u32();
        length = header.u64();
    } catch (const ModelFileError&) {
        throw ModelFileError(Kind::checksum, "truncated model file header");
    }
    if (version != kModelFormatVersion) {
        throw ModelFileError(Kind::version, "model format version " + std::to_string(version) +
                                                " is not supported (expected " +
                                                std::to_string(kModelFormatVersion) + ")");
    }
    constexpr std::size_t kHeader = sizeof kMagic + 4 + 8;
    if (bytes.size() != kHeader + length + 4) {
        throw ModelFileError(Kind::checksum, "model file length does not match its header (truncated or padded)");
    }
    const std::string_view payload = bytes.substr(kHeader, length);
    ByteReader trailer(bytes.substr(kHeader + length));
    if (trailer.u32() != crc_of(payload)) {
        throw ModelFileError(Kind::checksum, "model file checksum mismatch");
    }

    ByteReader r(payload);
    MlpModel m;
    const std::uint8_t act = r.u8();
    if (act > static_cast<std::uint8_t>(Activation::sigmoid)) {
        throw ModelFileError(Kind::format, "unknown activation code " + std::to_string(act));
    }
    m.activation = static_cast<Activation>(act);
    m.schema.inputs = r.strings();
    m.schema.input_units = r.strings();
    m.schema.outputs = r.strings();
    m.schema.output_units = r.strings();
    if (m.schema.inputs.empty() || m.schema.outputs.empty()) {
        throw ModelFileError(Kind::schema, "model file carries no feature schema");
    }
    m.input_norm = read_norm(r, m.schema.inputs);
    m.output_norm = read_norm(r, m.schema.outputs);
    const std::uint32_t n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        m.metadata[k] = r.str();
    }
    const std::uint32_t n_layers = r.u32();
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        DenseLayer layer;
        layer.weights.resize(rows, cols);
        layer.bias.resize(rows);
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = r.f64();
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = r.f64();
        m.layers.push_back(std::move(layer));
    }
    if (!r.done()) {
        throw ModelFileError(Kind::format, "trailing bytes in model payload");
    }
    try {
        m.validate();
    } catch (const SchemaError& e) {
        throw ModelFileError(Kind::schema, e.what());
    }
    return m;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, serialize(model));
}

MlpModel load_model(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = io::read_file(path);
    } catch (const LoadError& e) {
        throw ModelFileError(Kind::io, e.what());
    }
    return deserialize(bytes);
}

MlpModel load_model(const std::filesystem::path& path, const FeatureSchema& expected) {
    MlpModel m = load_model(path);
    if (m.schema.inputs != expected.inputs || m.schema.outputs != expected.outputs) {
        throw ModelFileError(Kind::schema, "model feature order does not match the expected schema");
    }
    if (!m.has_normalization()) {
        throw ModelFileError(Kind::schema, "model file has no normalization statistics");
    }
    return m;
}

}  // namespace urbanemu::mlp
