#include "mvod/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "mvod/errors.hpp"

namespace mvod {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'O', 'D'};

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Writer {
    std::FILE* f;
    const std::string& path;

    void bytes(const void* p, std::size_t n) {
        if (std::fwrite(p, 1, n, f) != n)
            throw ConfigError("checkpoint write failed: " + path);
    }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        if (!v.empty()) bytes(v.data(), v.size() * sizeof(double));
    }
    void matrix(const Matrix& m) {
        u64(m.rows);
        u64(m.cols);
        if (!m.data.empty()) bytes(m.data.data(), m.data.size() * sizeof(double));
    }
};

struct Reader {
    std::FILE* f;
    const std::string& path;

    void bytes(void* p, std::size_t n) {
        if (std::fread(p, 1, n, f) != n)
            throw ConfigError("truncated checkpoint: " + path);
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, sizeof v);
        return v;
    }
    // Element-count fields bound further reads, so a corrupt length cannot
    // trigger an allocation far beyond the file size.
    std::uint64_t count(std::uint64_t cap) {
        std::uint64_t v = u64();
        if (v > cap) throw ConfigError("corrupt checkpoint: " + path);
        return v;
    }
    std::vector<double> doubles(std::uint64_t expect) {
        std::uint64_t n = count(1u << 30);
        if (n != expect) throw ConfigError("corrupt checkpoint: " + path);
        std::vector<double> v(n);
        if (n) bytes(v.data(), n * sizeof(double));
        return v;
    }
    Matrix matrix() {
        std::uint64_t r = count(1u << 24);
        std::uint64_t c = count(1u << 24);
        if (r * c > (1u << 30)) throw ConfigError("corrupt checkpoint: " + path);
        Matrix m(r, c);
        if (!m.data.empty()) bytes(m.data.data(), m.data.size() * sizeof(double));
        return m;
    }
};

void write_layers(Writer& w, const std::vector<LayerParams>& layers) {
    w.u64(layers.size());
    for (const LayerParams& l : layers) {
        w.matrix(l.weight);
        w.doubles(l.bias);
    }
}

std::vector<LayerParams> read_layers(Reader& r) {
    std::uint64_t n = r.count(256);
    std::vector<LayerParams> layers(n);
    for (LayerParams& l : layers) {
        l.weight = r.matrix();
        l.bias = r.doubles(l.weight.cols);
    }
    return layers;
}

} // namespace

void save_checkpoint(const std::string& path, const AutoencoderStack& stack,
                     const AdamState& adam, const std::string& config_text,
                     std::uint64_t config_hash) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw ConfigError("cannot open checkpoint for writing: " + path);
    Writer w{fp.get(), path};

    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.u64(config_hash);
    w.u64(config_text.size());
    w.bytes(config_text.data(), config_text.size());

    w.u64(stack.n_views());
    for (const ViewAutoencoder& v : stack.views) {
        write_layers(w, v.encoder);
        write_layers(w, v.decoder);
    }

    w.f64(adam.beta1);
    w.f64(adam.beta2);
    w.f64(adam.epsilon);
    w.f64(adam.learning_rate);
    for (const AdamState::View& v : adam.views) {
        for (const auto* half : {&v.encoder, &v.decoder}) {
            for (const AdamState::Slot& s : *half) {
                w.u64(s.step);
                w.matrix(s.m_w);
                w.matrix(s.v_w);
                w.doubles(s.m_b);
                w.doubles(s.v_b);
            }
        }
    }
    if (std::fflush(fp.get()) != 0)
        throw ConfigError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw ConfigError("cannot open checkpoint: " + path);
    Reader r{fp.get(), path};

    char magic[4];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw ConfigError("not a checkpoint file: " + path);
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw ConfigError("unsupported checkpoint version " + std::to_string(version) +
                          ": " + path);

    Checkpoint ck;
    ck.config_hash = r.u64();
    std::uint64_t text_len = r.count(1u << 24);
    ck.config_text.resize(text_len);
    if (text_len) r.bytes(ck.config_text.data(), text_len);

    std::uint64_t n_views = r.count(64);
    if (n_views == 0) throw ConfigError("corrupt checkpoint: " + path);
    ck.stack.views.resize(n_views);
    for (ViewAutoencoder& v : ck.stack.views) {
        v.encoder = read_layers(r);
        v.decoder = read_layers(r);
        if (v.encoder.empty() || v.decoder.empty())
            throw ConfigError("corrupt checkpoint: " + path);
    }

    ck.adam.beta1 = r.f64();
    ck.adam.beta2 = r.f64();
    ck.adam.epsilon = r.f64();
    ck.adam.learning_rate = r.f64();
    ck.adam.views.resize(n_views);
    for (std::size_t vi = 0; vi < n_views; ++vi) {
        const ViewAutoencoder& pv = ck.stack.views[vi];
        AdamState::View& av = ck.adam.views[vi];
        for (const auto* half : {&pv.encoder, &pv.decoder}) {
            std::vector<AdamState::Slot>& slots =
                half == &pv.encoder ? av.encoder : av.decoder;
            slots.resize(half->size());
            for (std::size_t l = 0; l < half->size(); ++l) {
                AdamState::Slot& s = slots[l];
                const LayerParams& p = (*half)[l];
                s.step = r.u64();
                s.m_w = r.matrix();
                s.v_w = r.matrix();
                if (!s.m_w.same_shape(p.weight) || !s.v_w.same_shape(p.weight))
                    throw ConfigError("corrupt checkpoint: " + path);
                s.m_b = r.doubles(p.bias.size());
                s.v_b = r.doubles(p.bias.size());
            }
        }
    }
    return ck;
}

} // namespace mvod
