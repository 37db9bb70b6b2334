#include <algorithm>
#include <cmath>

#include "colorctrl/attention_control.hpp"
#include "colorctrl/errors.hpp"
#include "colorctrl/kernels.hpp"
#include "colorctrl/metrics.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace colorctrl;
using testing::Gen;
namespace oracle = testing::oracle;

TEST_CASE("QuadrantView names blocks by modality") {
    // 2 text + 2 vision; entry = 10 * row + col
    Tensor2 m(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) m(i, j) = float(10 * i + j);
    const QuadrantView q(m, 2);
    CHECK(q.vv(0, 1) == 23.0f);
    CHECK(q.vt(1, 0) == 30.0f);
    CHECK(q.tv(0, 1) == 3.0f);
    CHECK(q.tt(1, 1) == 11.0f);
    const Tensor2 vv = q.block(Quadrant::vv);
    CHECK(vv.rows() == 2);
    CHECK(vv(1, 1) == 33.0f);
    CHECK(QuadrantView::quadrant_of(3, 0, 2) == Quadrant::vt);
    CHECK(QuadrantView::quadrant_of(0, 3, 2) == Quadrant::tv);
    CHECK_THROWS_AS(QuadrantView(Tensor2(3, 4), 1), ControlError);
    CHECK_THROWS_AS(QuadrantView(Tensor2(3, 3), 4), ControlError);
}

TEST_CASE("structure_preserve matches the oracle and its invariants hold") {
    Gen g(31);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t n = g.size(1, 8), nt = g.size(0, n);
        const Tensor2 src = g.stochastic(n), tgt = g.stochastic(n);
        const Tensor2 out = structure_preserve(src, tgt, nt);
        CHECK(bitwise_equal(out, oracle::structure_preserve(src, tgt, nt)));
        // idempotent, and a self-edit is the identity
        CHECK(bitwise_equal(structure_preserve(src, out, nt), out));
        CHECK(bitwise_equal(structure_preserve(tgt, tgt, nt), tgt));
        Tensor2 inplace = tgt;
        structure_preserve_inplace(src, inplace, nt);
        CHECK(bitwise_equal(inplace, out));
    }
    CHECK_THROWS_AS(structure_preserve(Tensor2(3, 3), Tensor2(4, 4), 1), ControlError);
}

TEST_CASE("color_preserve matches the oracle; self-preserve is the identity") {
    Gen g(32);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t nv = g.size(1, 16), dh = g.size(1, 6);
        const Tensor2 a = g.tensor(nv, dh), b = g.tensor(nv, dh);
        const auto mask = g.bits(nv, g.unit());
        CHECK(bitwise_equal(color_preserve(a, b, mask), oracle::color_preserve(a, b, mask)));
        CHECK(bitwise_equal(color_preserve(b, b, mask), b));
    }
    const Tensor2 a(3, 2), b(3, 2);
    const std::vector<std::uint8_t> short_mask(2, 1);
    CHECK_THROWS_AS(color_preserve(a, b, short_mask), ShapeError);
}

TEST_CASE("binarize_mask matches the oracle and shrinks with epsilon") {
    Gen g(33);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t grid = g.size(1, 4);
        const ModelConfig cfg = testing::grid_config(grid);
        const auto s = g.scores01(grid * grid);
        const float eps = g.uniform(0.01f, 0.99f);
        const EditMask m = binarize_mask(s, eps, cfg);
        CHECK(m.token_mask == oracle::binarize(s, eps));
        CHECK(m.pixel_mask == oracle::upsample(m.token_mask, grid, cfg.patch));
        CHECK(m.epsilon_used == eps);
        const float eps2 = g.uniform(eps, 0.99f);
        const EditMask tighter = binarize_mask(s, eps2, cfg);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(tighter.token_mask[i] <= m.token_mask[i]);
    }
    const ModelConfig cfg = testing::grid_config(2);
    const std::vector<float> s(4, 0.5f);
    CHECK_THROWS_AS(binarize_mask(s, 0.0f, cfg), InputError);
    CHECK_THROWS_AS(binarize_mask(s, 1.0f, cfg), InputError);
    CHECK_THROWS_AS(binarize_mask(std::vector<float>(3), 0.1f, cfg), ShapeError);
    CHECK(binarize_mask(s, 0.5f, cfg).count() == 4);
}

TEST_CASE("mask up/down sampling round-trips; full mask covers everything") {
    Gen g(34);
    const ModelConfig cfg;  // 16x16 grid, patch 2
    CHECK(upsample_mask(std::vector<std::uint8_t>(cfg.n_vision(), 1), cfg).count() ==
          cfg.image_size * cfg.image_size);
    for (int trial = 0; trial < 20; ++trial) {
        const auto bits = g.bits(cfg.n_vision(), g.unit());
        CHECK(downsample_mask(upsample_mask(bits, cfg), cfg) == bits);
    }
    BinaryRaster one(cfg.image_size, cfg.image_size);
    one.at(5, 7) = 1;
    const auto tok = downsample_mask(one, cfg);
    CHECK(std::count(tok.begin(), tok.end(), 1) == 1);
    CHECK(tok[3 * 16 + 2] == 1);
    const EditMask full = full_mask(cfg);
    CHECK(full.count() == cfg.n_vision());
    CHECK(full.pixel_mask.count() == cfg.image_size * cfg.image_size);
}

TEST_CASE("dilate matches the oracle and composes") {
    Gen g(35);
    for (int trial = 0; trial < 150; ++trial) {
        const BinaryRaster m = g.raster(g.size(1, 8), g.size(1, 8), g.unit() * 0.3);
        const std::size_t r = g.size(0, 3);
        CHECK(dilate(m, r) == oracle::dilate(m, r));
        CHECK(dilate(dilate(m, 1), 1) == dilate(m, 2));
        CHECK(dilate(m, 0) == m);
    }
    const ModelConfig cfg = testing::grid_config(4);
    const EditMask d = dilate_mask(binarize_mask(std::vector<float>{0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},
                                                 0.5f, cfg),
                                   1, cfg);
    CHECK(d.count() == 9);
    CHECK(d.pixel_mask == upsample_mask(d.token_mask, cfg));
}

TEST_CASE("reweight_scores matches the oracle; identity cases are bitwise") {
    Gen g(36);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t n = g.size(2, 8), nt = g.size(1, n - 1);
        const Tensor2 s = g.tensor(n, n);
        std::vector<std::size_t> rows;
        for (std::size_t t = 0; t < nt; ++t)
            if (g.coin()) rows.push_back(t);
        const float scale = g.uniform(0.0f, 4.0f);
        CHECK(bitwise_equal(reweight_scores(s, rows, scale, nt), oracle::reweight(s, rows, scale, nt)));
        CHECK(bitwise_equal(reweight_scores(s, rows, 1.0f, nt), s));
        CHECK(bitwise_equal(reweight_scores(s, {}, scale, nt), s));
    }
    const Tensor2 s(4, 4);
    const std::size_t bad_row[] = {3};
    CHECK_THROWS_AS(reweight_scores(s, bad_row, 2.0f, 2), InputError);
    const std::size_t ok_row[] = {0};
    CHECK_THROWS_AS(reweight_scores(s, ok_row, -1.0f, 2), InputError);
}

TEST_CASE("reweight before softmax keeps rows stochastic and raises selected vision mass") {
    Gen g(37);
    const std::size_t nt = 3, n = 9;
    Tensor2 s(n, n);
    for (float& x : s.data()) x = g.uniform(0.5f, 3.0f);  // positive fixture
    const std::size_t rows[] = {1};
    double prev = -1.0;
    for (float scale : {0.5f, 1.0f, 2.0f}) {
        const Tensor2 p = softmax_rows(reweight_scores(s, rows, scale, nt), 0.5f);
        double mass = 0.0, sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sum += p(1, j);
            if (j >= nt) mass += p(1, j);
        }
        CHECK(std::abs(sum - 1.0) < 1e-5);
        CHECK(mass > prev);
        prev = mass;
    }
}

TEST_CASE("normalize_scores: min-max and the degenerate flag") {
    const std::vector<double> raw{2.0, 4.0, 3.0};
    const MaskScores m = normalize_scores(raw);
    CHECK_FALSE(m.degenerate);
    CHECK(m.values == std::vector<float>{0.0f, 1.0f, 0.5f});
    const std::vector<double> flat(5, 0.25);
    const MaskScores d = normalize_scores(flat);
    CHECK(d.degenerate);
    for (float v : d.values) CHECK(v == 0.0f);
}

TEST_CASE("accumulate_mask_scores equals a direct mean over conditional records") {
    Gen g(38);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t nt = g.size(2, 4), nv = g.size(2, 6), n = nt + nv;
        std::vector<AttentionRecord> recs(g.size(1, 5));
        for (std::size_t r = 0; r < recs.size(); ++r) {
            recs[r].pass = r == 0 || g.coin() ? Pass::cond : Pass::uncond;
            recs[r].map = g.stochastic(n);
            recs[r].v_text = Tensor2(nt, 1);
            recs[r].v_vision = Tensor2(nv, 1);
        }
        const std::size_t begin = g.size(0, nt - 1);
        const TokenSpan sp{begin, g.size(begin + 1, nt)};
        std::vector<double> raw(nv, 0.0);
        for (const auto& r : recs) {
            if (r.pass != Pass::cond) continue;
            for (std::size_t i = 0; i < nv; ++i)
                for (std::size_t t = sp.begin; t < sp.end; ++t) raw[i] += r.map(nt + i, t);
        }
        const MaskScores want = normalize_scores(raw);
        const MaskScores got = accumulate_mask_scores(recs, sp);
        REQUIRE(got.values.size() == nv);
        for (std::size_t i = 0; i < nv; ++i) CHECK(got.values[i] == doctest::Approx(want.values[i]).epsilon(1e-6));
    }
    std::vector<AttentionRecord> only_uncond(1);
    only_uncond[0].pass = Pass::uncond;
    only_uncond[0].map = Tensor2(4, 4);
    only_uncond[0].v_text = Tensor2(2, 1);
    CHECK_THROWS_AS(accumulate_mask_scores(only_uncond, TokenSpan{0, 1}), InputError);
    only_uncond[0].pass = Pass::cond;
    CHECK_THROWS_AS(accumulate_mask_scores(only_uncond, TokenSpan{1, 3}), InputError);
    CHECK_THROWS_AS(accumulate_mask_scores(only_uncond, TokenSpan{1, 1}), InputError);
}
