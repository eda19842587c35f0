#include "evoact/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace evoact {

namespace {

constexpr char kMagic[7] = {'E', 'V', 'O', 'A', 'C', 'T', '1'};

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

struct Writer {
    std::vector<unsigned char>& out;
    template <typename T>
    void pod(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out.insert(out.end(), buf, buf + sizeof(T));
    }
    void bytes(const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        out.insert(out.end(), b, b + n);
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void reals(const std::vector<real>& v) { bytes(v.data(), v.size() * sizeof(real)); }
    void doubles(const std::vector<double>& v) {
        pod(static_cast<std::uint32_t>(v.size()));
        bytes(v.data(), v.size() * sizeof(double));
    }
};

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n) throw checkpoint_error("checkpoint truncated");
    }
    template <typename T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, p, sizeof(T));
        p += sizeof(T);
        return v;
    }
    std::string str() {
        std::uint32_t n = pod<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
    void reals(std::vector<real>& v, std::size_t count) {
        need(count * sizeof(real));
        v.resize(count);
        std::memcpy(v.data(), p, count * sizeof(real));
        p += count * sizeof(real);
    }
    std::vector<double> doubles() {
        std::uint32_t n = pod<std::uint32_t>();
        need(static_cast<std::size_t>(n) * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), p, n * sizeof(double));
        p += n * sizeof(double);
        return v;
    }
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const CheckpointData& data) {
    std::vector<unsigned char> payload;
    Writer w{payload};
    w.str(data.config_json);
    w.str(data.rng_algorithm);
    w.pod(data.rng_seed);
    w.pod(data.rng_counter);
    w.pod(data.stage);
    w.pod(data.step);
    w.doubles(data.norm.action_mean);
    w.doubles(data.norm.action_std);
    w.doubles(data.norm.state_mean);
    w.doubles(data.norm.state_std);
    w.pod(static_cast<std::uint32_t>(data.params.size()));
    for (const auto& prm : data.params) {
        w.str(prm.name);
        w.pod(static_cast<std::uint8_t>(prm.frozen ? 1 : 0));
        w.pod(static_cast<std::uint32_t>(prm.shape.size()));
        for (int d : prm.shape) w.pod(static_cast<std::int32_t>(d));
        w.reals(prm.data);
        w.reals(prm.m);
        w.reals(prm.v);
        w.pod(prm.steps);
    }

    std::vector<unsigned char> out;
    Writer h{out};
    h.bytes(kMagic, sizeof(kMagic));
    h.pod(static_cast<std::uint8_t>(sizeof(real)));
    h.pod(CheckpointData::kVersion);
    h.pod(fnv1a(payload.data(), payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

CheckpointData deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
    Reader r{bytes.data(), bytes.data() + bytes.size()};
    r.need(sizeof(kMagic));
    if (std::memcmp(r.p, kMagic, sizeof(kMagic)) != 0) throw checkpoint_error("checkpoint: bad magic bytes");
    r.p += sizeof(kMagic);
    auto width = r.pod<std::uint8_t>();
    if (width != sizeof(real)) {
        throw checkpoint_error("checkpoint: scalar width " + std::to_string(width) + " does not match build (" +
                               std::to_string(sizeof(real)) + ")");
    }
    auto version = r.pod<std::uint32_t>();
    if (version != CheckpointData::kVersion) {
        throw checkpoint_error("checkpoint: unsupported version " + std::to_string(version));
    }
    auto stored_hash = r.pod<std::uint64_t>();
    std::uint64_t actual = fnv1a(r.p, static_cast<std::size_t>(r.end - r.p));
    if (stored_hash != actual) throw checkpoint_error("checkpoint: content hash mismatch, refusing to load");

    CheckpointData data;
    data.config_json = r.str();
    data.rng_algorithm = r.str();
    data.rng_seed = r.pod<std::uint64_t>();
    data.rng_counter = r.pod<std::uint64_t>();
    data.stage = r.pod<std::uint32_t>();
    data.step = r.pod<std::int64_t>();
    data.norm.action_mean = r.doubles();
    data.norm.action_std = r.doubles();
    data.norm.state_mean = r.doubles();
    data.norm.state_std = r.doubles();
    auto count = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointData::Param prm;
        prm.name = r.str();
        prm.frozen = r.pod<std::uint8_t>() != 0;
        auto ndim = r.pod<std::uint32_t>();
        std::int64_t numel = 1;
        for (std::uint32_t k = 0; k < ndim; ++k) {
            prm.shape.push_back(r.pod<std::int32_t>());
            numel *= prm.shape.back();
        }
        if (numel <= 0) throw checkpoint_error("checkpoint: invalid parameter shape for " + prm.name);
        r.reals(prm.data, static_cast<std::size_t>(numel));
        r.reals(prm.m, static_cast<std::size_t>(numel));
        r.reals(prm.v, static_cast<std::size_t>(numel));
        prm.steps = r.pod<std::int64_t>();
        data.params.push_back(std::move(prm));
    }
    if (r.p != r.end) throw checkpoint_error("checkpoint: trailing bytes after payload");
    return data;
}

void save_checkpoint_file(const std::string& path, const CheckpointData& data) {
    auto bytes = serialize_checkpoint(data);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw checkpoint_error("cannot write checkpoint file " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CheckpointData load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw checkpoint_error("cannot open checkpoint file " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

void collect_params(const ParamStore& store, CheckpointData& data) {
    data.params.clear();
    store.for_each([&](const std::string& name, const ParamStore::Entry& e) {
        CheckpointData::Param prm;
        prm.name = name;
        prm.frozen = e.frozen;
        prm.shape = e.tensor.shape();
        prm.data = e.tensor.vec();
        prm.m = e.m;
        prm.v = e.v;
        prm.steps = e.steps;
        data.params.push_back(std::move(prm));
    });
}

void apply_params(const CheckpointData& data, ParamStore& store) {
    if (data.params.size() != store.size()) {
        throw checkpoint_error("checkpoint holds " + std::to_string(data.params.size()) + " parameters, model has " +
                               std::to_string(store.size()));
    }
    for (const auto& prm : data.params) {
        if (!store.has(prm.name)) throw checkpoint_error("checkpoint parameter '" + prm.name + "' unknown to model");
        ParamStore::Entry& e = store.entry(prm.name);
        if (e.tensor.shape() != prm.shape) {
            throw checkpoint_error("checkpoint parameter '" + prm.name + "' shape " + shape_str(prm.shape) +
                                   " does not match model " + shape_str(e.tensor.shape()));
        }
        e.tensor.vec() = prm.data;
        e.m = prm.m;
        e.v = prm.v;
        e.steps = prm.steps;
        e.frozen = prm.frozen;
        e.tensor.set_requires_grad(!prm.frozen);
    }
}

}  // namespace evoact
