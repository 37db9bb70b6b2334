#include "colorctrl/cache.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "colorctrl/errors.hpp"

namespace colorctrl {

CacheShape CacheShape::from(const ModelConfig& config, std::size_t steps) {
    CacheShape s;
    s.steps = steps;
    s.layers = config.n_layers;
    s.heads = config.n_heads;
    s.n_text = config.n_text;
    s.n_vision = config.n_vision();
    s.d_head = config.d_head();
    return s;
}

std::size_t CacheShape::index(const CacheKey& key) const {
    const auto pass = static_cast<std::size_t>(key.pass);
    if (key.step >= steps || key.layer >= layers || key.head >= heads || pass > 1) {
        throw ControlError("cache key (step " + std::to_string(key.step) + ", layer " + std::to_string(key.layer) +
                           ", head " + std::to_string(key.head) + ") outside cache shape");
    }
    return ((key.step * layers + key.layer) * heads + key.head) * 2 + pass;
}

CacheKey CacheShape::key_at(std::size_t index) const {
    CacheKey k;
    k.pass = static_cast<Pass>(index % 2);
    index /= 2;
    k.head = index % heads;
    index /= heads;
    k.layer = index % layers;
    k.step = index / layers;
    return k;
}

std::size_t CacheShape::record_floats() const {
    const std::size_t n = n_tokens();
    return n_text * n + n * n + n_text * d_head + n_vision * d_head;
}

BranchCache::BranchCache(const CacheShape& shape, std::size_t budget_bytes)
    : shape_(shape), budget_(budget_bytes), slots_(shape.key_count()) {}

void BranchCache::insert(AttentionRecord&& record) {
    if (finalized_) throw StateError("cache is finalized; insert rejected");
    const CacheKey key{record.step, record.layer, record.head, record.pass};
    const std::size_t idx = shape_.index(key);
    const std::size_t n = shape_.n_tokens();
    if (record.scores.rows() != shape_.n_text || record.scores.cols() != n || record.map.rows() != n ||
        record.map.cols() != n || record.v_text.rows() != shape_.n_text || record.v_text.cols() != shape_.d_head ||
        record.v_vision.rows() != shape_.n_vision || record.v_vision.cols() != shape_.d_head) {
        throw ControlError("attention record does not match the cache shape");
    }
    if (slots_[idx]) throw StateError("duplicate cache key at index " + std::to_string(idx));
    const std::size_t b = record.payload_bytes();
    if (budget_ != 0 && bytes_ + b > budget_) {
        throw ResourceError("attention cache exceeds its memory budget of " + std::to_string(budget_) + " bytes (" +
                            std::to_string(shape_.key_count() * shape_.record_bytes()) + " needed)");
    }
    slots_[idx] = std::move(record);
    bytes_ += b;
    ++count_;
}

void BranchCache::finalize() {
    if (finalized_) throw StateError("cache already finalized");
    if (count_ != shape_.key_count()) {
        throw StateError("cache incomplete: " + std::to_string(count_) + " of " +
                         std::to_string(shape_.key_count()) + " records");
    }
    const std::size_t nt = shape_.n_text, nv = shape_.n_vision;
    vt_sums_.assign(nv * nt, 0.0);
    cond_records_ = 0;
    for (const auto& slot : slots_) {
        if (slot->pass != Pass::cond) continue;
        for (std::size_t i = 0; i < nv; ++i) {
            auto row = slot->map.row(nt + i);
            double* dst = vt_sums_.data() + i * nt;
            for (std::size_t t = 0; t < nt; ++t) dst[t] += row[t];
        }
        ++cond_records_;
    }
    finalized_ = true;
}

bool BranchCache::contains(const CacheKey& key) const { return find(key) != nullptr; }

const AttentionRecord* BranchCache::find(const CacheKey& key) const {
    if (slots_.empty()) return nullptr;
    const auto& slot = slots_[shape_.index(key)];
    return slot ? &*slot : nullptr;
}

const AttentionRecord& BranchCache::at(const CacheKey& key) const {
    const AttentionRecord* r = find(key);
    if (!r) throw ControlError("cache has no record for step " + std::to_string(key.step));
    return *r;
}

std::vector<const AttentionRecord*> BranchCache::records() const {
    std::vector<const AttentionRecord*> out;
    out.reserve(count_);
    for (const auto& slot : slots_) {
        if (slot) out.push_back(&*slot);
    }
    return out;
}

MaskScores BranchCache::mask_scores(std::span<const TokenSpan> spans) const {
    if (!finalized_) throw StateError("mask scores need a finalized cache");
    if (spans.empty()) throw InputError("mask span set is empty");
    const std::size_t nt = shape_.n_text;
    std::size_t columns = 0;
    for (const TokenSpan& s : spans) {
        if (s.empty() || s.end > nt) throw InputError("mask span outside text tokens");
        columns += s.size();
    }
    if (cond_records_ == 0) throw InputError("cache holds no conditional records");
    const double denom = static_cast<double>(cond_records_) * static_cast<double>(columns);
    std::vector<double> raw(shape_.n_vision, 0.0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double acc = 0.0;
        for (const TokenSpan& s : spans) {
            for (std::size_t t = s.begin; t < s.end; ++t) acc += vt_sums_[i * nt + t];
        }
        raw[i] = acc / denom;
    }
    return normalize_scores(raw);
}

// ---- file format ----------------------------------------------------------

namespace {

template <class T>
T swap_bytes(T v) {
    T out = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) out = static_cast<T>((out << 8) | ((v >> (8 * i)) & 0xff));
    return out;
}

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed: " + path_.string());
    }
    template <class T>
    void le(T v) {
        unsigned char b[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, sizeof(T));
    }
    void u32(std::size_t v) {
        if (v > 0xffffffffu) throw IoError("value too large for cache header");
        le<std::uint32_t>(static_cast<std::uint32_t>(v));
    }
    void f32s(std::span<const float> v) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(v.data(), v.size_bytes());
        } else {
            for (float f : v) le<std::uint32_t>(std::bit_cast<std::uint32_t>(f));
        }
    }
    void f64s(std::span<const double> v) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(v.data(), v.size_bytes());
        } else {
            for (double f : v) le<std::uint64_t>(std::bit_cast<std::uint64_t>(f));
        }
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open cache file " + path.string());
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw LoadError(path_.string() + ": truncated cache file");
        }
    }
    template <class T>
    T le() {
        unsigned char b[sizeof(T)];
        bytes(b, sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
        return v;
    }
    std::size_t u32() { return le<std::uint32_t>(); }
    void f32s(std::span<float> v) {
        bytes(v.data(), v.size_bytes());
        if constexpr (std::endian::native != std::endian::little) {
            for (float& f : v) f = std::bit_cast<float>(swap_bytes(std::bit_cast<std::uint32_t>(f)));
        }
    }
    void f64s(std::span<double> v) {
        bytes(v.data(), v.size_bytes());
        if constexpr (std::endian::native != std::endian::little) {
            for (double& f : v) f = std::bit_cast<double>(swap_bytes(std::bit_cast<std::uint64_t>(f)));
        }
    }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
    [[noreturn]] void fail(const std::string& why) const { throw LoadError(path_.string() + ": " + why); }

private:
    std::filesystem::path path_;
    std::ifstream in_;
};

}  // namespace

void BranchCache::save(const std::filesystem::path& path) const {
    if (!finalized_) throw StateError("only a finalized cache can be saved");
    Writer w(path);
    w.bytes(kCacheMagic, 4);
    w.le<std::uint32_t>(kCacheVersion);
    w.le<std::uint64_t>(source_.config_digest);
    w.le<std::uint64_t>(source_.params_digest);
    w.le<std::uint64_t>(source_.noise_digest);
    w.u32(shape_.steps);
    w.u32(shape_.layers);
    w.u32(shape_.heads);
    w.u32(shape_.n_text);
    w.u32(shape_.n_vision);
    w.u32(shape_.d_head);
    w.u32(source_.prompt.size());
    w.bytes(source_.prompt.data(), source_.prompt.size());
    w.u32(source_.image.width);
    w.u32(source_.image.height);
    w.u32(source_.image.channels);
    w.bytes(source_.image.data.data(), source_.image.data.size());

    w.u32(count_);
    const std::uint64_t per = shape_.record_floats();
    std::uint64_t offset = 0;
    for (const AttentionRecord* r : records()) {
        w.u32(r->step);
        w.u32(r->layer);
        w.u32(r->head);
        w.u32(static_cast<std::size_t>(r->pass));
        w.le<std::uint64_t>(offset);
        w.le<std::uint64_t>(per);
        offset += per * sizeof(float);
    }
    w.le<std::uint64_t>(cond_records_);
    w.f64s(vt_sums_);
    for (const AttentionRecord* r : records()) {
        w.f32s(r->scores.data());
        w.f32s(r->map.data());
        w.f32s(r->v_text.data());
        w.f32s(r->v_vision.data());
    }
}

BranchCache BranchCache::load(const std::filesystem::path& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kCacheMagic, 4) != 0) r.fail("not a cache file (bad magic)");
    if (const auto v = r.le<std::uint32_t>(); v != kCacheVersion) {
        r.fail("unsupported cache version " + std::to_string(v));
    }
    SourceInfo info;
    info.config_digest = r.le<std::uint64_t>();
    info.params_digest = r.le<std::uint64_t>();
    info.noise_digest = r.le<std::uint64_t>();
    CacheShape shape;
    shape.steps = r.u32();
    shape.layers = r.u32();
    shape.heads = r.u32();
    shape.n_text = r.u32();
    shape.n_vision = r.u32();
    shape.d_head = r.u32();
    constexpr std::size_t kSane = 1u << 16;
    if (shape.steps == 0 || shape.layers == 0 || shape.heads == 0 || shape.n_text == 0 || shape.n_vision == 0 ||
        shape.d_head == 0 || shape.steps > kSane || shape.layers > kSane || shape.heads > kSane ||
        shape.n_text > kSane || shape.n_vision > kSane || shape.d_head > kSane) {
        r.fail("implausible cache shape");
    }
    info.prompt.resize(r.u32());
    r.bytes(info.prompt.data(), info.prompt.size());
    const std::size_t w = r.u32(), h = r.u32(), c = r.u32();
    if (w > kSane || h > kSane || c > 4) r.fail("implausible source image size");
    info.image = ImageBuffer(w, h, c);
    r.bytes(info.image.data.data(), info.image.data.size());

    const std::size_t count = r.u32();
    if (count != shape.key_count()) {
        r.fail("record count " + std::to_string(count) + " != expected " + std::to_string(shape.key_count()));
    }
    const std::uint64_t per = shape.record_floats();
    struct Entry {
        CacheKey key;
        std::uint64_t offset;
    };
    std::vector<Entry> table(count);
    std::uint64_t expected = 0;
    for (Entry& e : table) {
        e.key.step = r.u32();
        e.key.layer = r.u32();
        e.key.head = r.u32();
        const std::size_t pass = r.u32();
        if (pass > 1) r.fail("bad pass tag in index table");
        e.key.pass = static_cast<Pass>(pass);
        e.offset = r.le<std::uint64_t>();
        if (r.le<std::uint64_t>() != per) r.fail("record size disagrees with cache shape");
        if (e.offset != expected) r.fail("index table offsets are not contiguous");
        expected += per * sizeof(float);
    }

    BranchCache cache(shape);
    cache.cond_records_ = r.le<std::uint64_t>();
    std::vector<double> sums(shape.n_vision * shape.n_text);
    r.f64s(sums);
    const std::size_t n = shape.n_tokens();
    for (const Entry& e : table) {
        AttentionRecord rec;
        rec.step = e.key.step;
        rec.layer = e.key.layer;
        rec.head = e.key.head;
        rec.pass = e.key.pass;
        rec.scores = Tensor2(shape.n_text, n);
        rec.map = Tensor2(n, n);
        rec.v_text = Tensor2(shape.n_text, shape.d_head);
        rec.v_vision = Tensor2(shape.n_vision, shape.d_head);
        r.f32s(rec.scores.data());
        r.f32s(rec.map.data());
        r.f32s(rec.v_text.data());
        r.f32s(rec.v_vision.data());
        try {
            cache.insert(std::move(rec));
        } catch (const Error& err) {
            r.fail(err.what());
        }
    }
    if (!r.at_end()) r.fail("trailing bytes after the last record");
    cache.finalized_ = true;
    cache.vt_sums_ = std::move(sums);
    cache.source_ = std::move(info);
    return cache;
}

}  // namespace colorctrl
