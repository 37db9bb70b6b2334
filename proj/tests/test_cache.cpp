#include <filesystem>
#include <fstream>

#include "colorctrl/cache.hpp"
#include "colorctrl/errors.hpp"
#include "colorctrl/sampler.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace colorctrl;
using testing::Gen;

namespace {

CacheShape small_shape() {
    CacheShape s;
    s.steps = 2;
    s.layers = 2;
    s.heads = 2;
    s.n_text = 3;
    s.n_vision = 4;
    s.d_head = 2;
    return s;
}

AttentionRecord make_record(Gen& g, const CacheShape& s, const CacheKey& k) {
    AttentionRecord r;
    r.step = k.step;
    r.layer = k.layer;
    r.head = k.head;
    r.pass = k.pass;
    r.scores = g.tensor(s.n_text, s.n_tokens());
    r.map = g.stochastic(s.n_tokens());
    r.v_text = g.tensor(s.n_text, s.d_head);
    r.v_vision = g.tensor(s.n_vision, s.d_head);
    return r;
}

BranchCache full_cache(Gen& g, const CacheShape& s) {
    BranchCache c(s);
    for (std::size_t i = 0; i < s.key_count(); ++i) c.insert(make_record(g, s, s.key_at(i)));
    return c;
}

}  // namespace

TEST_CASE("cache shape: dense index is a bijection over the key space") {
    const CacheShape s = small_shape();
    CHECK(s.key_count() == 2 * 2 * 2 * 2);
    for (std::size_t i = 0; i < s.key_count(); ++i) CHECK(s.index(s.key_at(i)) == i);
    CHECK(s.index({1, 0, 1, Pass::uncond}) == ((1 * 2 + 0) * 2 + 1) * 2 + 1);
    CHECK_THROWS_AS(s.index({2, 0, 0, Pass::cond}), ControlError);
    CHECK_THROWS_AS(s.index({0, 0, 2, Pass::cond}), ControlError);
    CHECK(s.record_floats() == 3 * 7 + 7 * 7 + 3 * 2 + 4 * 2);

    const ModelConfig cfg;
    const CacheShape d = CacheShape::from(cfg, 28);
    CHECK(d.key_count() == 28 * cfg.n_layers * cfg.n_heads * 2);
    CHECK(d.n_vision == cfg.n_vision());
}

TEST_CASE("cache lifecycle: write once, then read only") {
    Gen g(41);
    const CacheShape s = small_shape();
    BranchCache c(s);
    CHECK_THROWS_AS(c.finalize(), StateError);  // incomplete
    c.insert(make_record(g, s, {0, 0, 0, Pass::cond}));
    CHECK(c.contains({0, 0, 0, Pass::cond}));
    CHECK_FALSE(c.contains({0, 0, 0, Pass::uncond}));
    CHECK(c.find({0, 1, 0, Pass::cond}) == nullptr);
    CHECK_THROWS_AS(c.at({0, 1, 0, Pass::cond}), ControlError);
    CHECK_THROWS_AS(c.insert(make_record(g, s, {0, 0, 0, Pass::cond})), StateError);

    AttentionRecord wrong = make_record(g, s, {0, 1, 0, Pass::cond});
    wrong.map = Tensor2(3, 3);
    CHECK_THROWS_AS(c.insert(std::move(wrong)), ControlError);
    CHECK_THROWS_AS(c.insert(make_record(g, s, {5, 0, 0, Pass::cond})), ControlError);
    CHECK_THROWS_AS(c.mask_scores(std::vector<TokenSpan>{{0, 1}}), StateError);

    BranchCache full = full_cache(g, s);
    CHECK(full.size() == s.key_count());
    CHECK(full.bytes() == s.key_count() * s.record_bytes());
    full.finalize();
    CHECK(full.finalized());
    CHECK_THROWS_AS(full.finalize(), StateError);
    CHECK_THROWS_AS(full.insert(make_record(g, s, {0, 0, 0, Pass::cond})), StateError);
    const auto recs = full.records();
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(s.index({recs[i]->step, recs[i]->layer, recs[i]->head, recs[i]->pass}) == i);
    CHECK(full.cond_records() == s.key_count() / 2);
}

TEST_CASE("cache budget is enforced") {
    Gen g(42);
    const CacheShape s = small_shape();
    BranchCache c(s, s.record_bytes() * 3);
    for (std::size_t i = 0; i < 3; ++i) c.insert(make_record(g, s, s.key_at(i)));
    CHECK_THROWS_AS(c.insert(make_record(g, s, s.key_at(3))), ResourceError);
}

TEST_CASE("cache mask scores agree with accumulating the records directly") {
    Gen g(43);
    const CacheShape s = small_shape();
    BranchCache c = full_cache(g, s);
    c.finalize();
    const std::vector<TokenSpan> spans{{1, 2}};
    const MaskScores a = c.mask_scores(spans);
    const auto recs = c.records();
    const MaskScores b = accumulate_mask_scores(recs, spans);
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-6));
    CHECK_THROWS_AS(c.mask_scores(std::vector<TokenSpan>{{2, 4}}), InputError);
    CHECK_THROWS_AS(c.mask_scores(std::vector<TokenSpan>{}), InputError);
}

TEST_CASE("cache file round-trips bitwise") {
    Gen g(44);
    const CacheShape s = small_shape();
    BranchCache c = full_cache(g, s);
    c.source().prompt = "a white fox";
    c.source().image = g.image(4, 4, 3);
    c.source().config_digest = 11;
    c.source().params_digest = 22;
    c.source().noise_digest = 33;
    CHECK_THROWS_AS(c.save(testing::scratch_dir("cache_unfinal") / "c.bin"), StateError);
    c.finalize();

    const auto dir = testing::scratch_dir("cache_roundtrip");
    c.save(dir / "a.bin");
    const BranchCache back = BranchCache::load(dir / "a.bin");
    CHECK(back.finalized());
    CHECK(back.shape() == s);
    CHECK(back.source() == c.source());
    CHECK(back.size() == c.size());
    for (std::size_t i = 0; i < s.key_count(); ++i) {
        const auto& x = c.at(s.key_at(i));
        const auto& y = back.at(s.key_at(i));
        CHECK(bitwise_equal(x.scores, y.scores));
        CHECK(bitwise_equal(x.map, y.map));
        CHECK(bitwise_equal(x.v_text, y.v_text));
        CHECK(bitwise_equal(x.v_vision, y.v_vision));
    }
    CHECK(std::equal(back.vt_sums().begin(), back.vt_sums().end(), c.vt_sums().begin(), c.vt_sums().end()));
    back.save(dir / "b.bin");
    CHECK(testing::read_file(dir / "a.bin") == testing::read_file(dir / "b.bin"));
}

TEST_CASE("cache load rejects damaged files") {
    Gen g(45);
    const CacheShape s = small_shape();
    BranchCache c = full_cache(g, s);
    c.source().prompt = "p";
    c.finalize();
    const auto dir = testing::scratch_dir("cache_damage");
    c.save(dir / "ok.bin");
    const std::string bytes = testing::read_file(dir / "ok.bin");
    auto write = [&](const std::string& name, const std::string& data) {
        std::ofstream(dir / name, std::ios::binary) << data;
        return dir / name;
    };
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(BranchCache::load(write("magic.bin", bad_magic)), LoadError);
    std::string bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(BranchCache::load(write("version.bin", bad_version)), LoadError);
    CHECK_THROWS_AS(BranchCache::load(write("trunc.bin", bytes.substr(0, bytes.size() - 5))), LoadError);
    CHECK_THROWS_AS(BranchCache::load(write("short.bin", bytes.substr(0, 10))), LoadError);
    CHECK_THROWS_AS(BranchCache::load(write("trailing.bin", bytes + "x")), LoadError);
    CHECK_THROWS_AS(BranchCache::load(write("empty.bin", "")), LoadError);
    CHECK_THROWS_AS(BranchCache::load(dir / "missing.bin"), IoError);
}

TEST_CASE("a recorded source branch fills every key") {
    const ModelConfig cfg = testing::tiny_config();
    const Model model(cfg);
    const Sampler sampler(model);
    SampleParams p;
    p.steps = 3;
    const SourceResult r = sampler.run_source("a white fox", p);
    CHECK(r.cache.finalized());
    CHECK(r.cache.size() == 3 * cfg.n_layers * cfg.n_heads * 2);
    CHECK(r.cache.source().prompt == "a white fox");
    CHECK(r.cache.source().image == r.image);
    CHECK(r.cache.source().config_digest == cfg.digest());
}
