#include "colorctrl/bench.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "colorctrl/errors.hpp"
#include "colorctrl/image_io.hpp"
#include "colorctrl/tokenizer.hpp"

namespace colorctrl {

const char* mode_name(AblationMode m) {
    switch (m) {
        case AblationMode::fix_seed: return "fix_seed";
        case AblationMode::structure_only: return "structure_only";
        case AblationMode::full: return "full";
    }
    return "?";
}

std::vector<AblationMode> parse_modes(std::string_view list) {
    if (list == "all") return {AblationMode::fix_seed, AblationMode::structure_only, AblationMode::full};
    std::vector<AblationMode> out;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        const std::size_t comma = std::min(list.find(',', pos), list.size());
        const std::string_view name = list.substr(pos, comma - pos);
        AblationMode m;
        if (name == "fix_seed") {
            m = AblationMode::fix_seed;
        } else if (name == "structure_only") {
            m = AblationMode::structure_only;
        } else if (name == "full") {
            m = AblationMode::full;
        } else {
            throw InputError("unknown ablation mode '" + std::string(name) +
                             "' (expected fix_seed, structure_only, full or all)");
        }
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
        pos = comma + 1;
    }
    return out;
}

// ---- suite loading ----------------------------------------------------------

namespace {

std::size_t line_of(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

// Line on which each element of the top-level array starts.
std::vector<std::size_t> element_lines(std::string_view text) {
    std::vector<std::size_t> lines;
    std::size_t line = 1;
    int depth = 0;
    bool in_string = false, escaped = false, expect_element = false;
    for (char ch : text) {
        if (ch == '\n') ++line;
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (ch == '\\') {
                escaped = true;
            } else if (ch == '"') {
                in_string = false;
            }
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        if (depth == 1 && expect_element && ch != ']') {
            lines.push_back(line);
            expect_element = false;
        }
        switch (ch) {
            case '"': in_string = true; break;
            case '[':
            case '{':
                ++depth;
                if (depth == 1) expect_element = true;
                break;
            case ']':
            case '}': --depth; break;
            case ',':
                if (depth == 1) expect_element = true;
                break;
            default: break;
        }
    }
    return lines;
}

std::vector<std::string> prompt_words(std::string_view prompt) {
    std::vector<std::string> words;
    std::istringstream in{std::string(prompt)};
    std::string w;
    while (in >> w) {
        std::string n = normalize_word(w);
        if (!n.empty()) words.push_back(std::move(n));
    }
    return words;
}

bool has_word(std::string_view prompt, std::string_view word) {
    const std::string n = normalize_word(word);
    const auto words = prompt_words(prompt);
    return std::find(words.begin(), words.end(), n) != words.end();
}

}  // namespace

std::vector<EditCase> parse_suite(std::string_view text, const std::string& origin,
                                  const std::filesystem::path& base_dir) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t line = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
        throw LoadError(origin + ":" + std::to_string(line) + ": malformed JSON: " + e.what());
    }
    if (!doc.is_array()) throw LoadError(origin + ":1: suite must be a JSON array of cases");
    if (doc.empty()) throw LoadError(origin + ":1: suite has no cases");

    const std::vector<std::size_t> lines = element_lines(text);
    std::vector<EditCase> cases;
    std::vector<std::string> seen;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::size_t line = i < lines.size() ? lines[i] : 1;
        auto fail = [&](const std::string& why) {
            throw LoadError(origin + ":" + std::to_string(line) + ": case " + std::to_string(i) + ": " + why);
        };
        const nlohmann::json& obj = doc[i];
        if (!obj.is_object()) fail("expected an object");
        for (const auto& [key, _] : obj.items()) {
            static const char* known[] = {"id",        "source_prompt", "target_prompt", "blended_word",
                                          "token_index", "reweight",    "eval_mask"};
            if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; })) {
                fail("unknown field \"" + key + "\"");
            }
        }
        auto str = [&](const char* key, bool required) -> std::string {
            if (!obj.contains(key)) {
                if (required) fail(std::string("missing \"") + key + "\"");
                return {};
            }
            if (!obj[key].is_string()) fail(std::string("\"") + key + "\" must be a string");
            return obj[key].get<std::string>();
        };
        EditCase c;
        c.id = str("id", true);
        if (c.id.empty()) fail("empty id");
        if (std::find(seen.begin(), seen.end(), c.id) != seen.end()) fail("duplicate id \"" + c.id + "\"");
        c.source_prompt = str("source_prompt", true);
        c.target_prompt = str("target_prompt", true);
        if (prompt_words(c.source_prompt).empty()) fail("source_prompt has no words");
        if (prompt_words(c.target_prompt).empty()) fail("target_prompt has no words");
        c.blended_word = str("blended_word", false);
        if (obj.contains("token_index")) {
            const auto& t = obj["token_index"];
            if (!t.is_number_unsigned()) fail("\"token_index\" must be a non-negative integer");
            c.token_index = t.get<std::size_t>();
            if (*c.token_index >= prompt_words(c.source_prompt).size()) fail("\"token_index\" past the source prompt");
        }
        if (c.blended_word.empty() && !c.token_index) fail("needs \"blended_word\" or \"token_index\"");
        if (!c.blended_word.empty() && !c.token_index &&
            (!has_word(c.source_prompt, c.blended_word) || !has_word(c.target_prompt, c.blended_word))) {
            fail("blended_word \"" + c.blended_word + "\" must appear in both prompts (or give token_index)");
        }
        if (obj.contains("reweight")) {
            const auto& rw = obj["reweight"];
            if (!rw.is_object()) fail("\"reweight\" must be an object of word -> scale");
            for (const auto& [word, scale] : rw.items()) {
                if (!scale.is_number() || scale.get<double>() < 0.0) fail("re-weight scale for \"" + word + "\" must be >= 0");
                if (!has_word(c.target_prompt, word)) fail("re-weight word \"" + word + "\" not in target prompt");
                c.reweight.push_back({word, scale.get<float>()});
            }
        }
        if (obj.contains("eval_mask")) {
            const std::filesystem::path p = str("eval_mask", false);
            c.eval_mask = p.is_absolute() ? p : base_dir / p;
        }
        seen.push_back(c.id);
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<EditCase> load_suite(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open suite file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_suite(ss.str(), path.string(), path.parent_path());
}

// ---- running ----------------------------------------------------------------

const ModeResult* CaseResult::find(AblationMode m) const {
    for (const ModeResult& r : modes) {
        if (r.mode == m) return &r;
    }
    return nullptr;
}

EditSpec make_spec(const EditCase& c, AblationMode mode, const ModelConfig& config, float epsilon) {
    EditSpec spec;
    spec.source_prompt = c.source_prompt;
    spec.target_prompt = c.target_prompt;
    spec.epsilon = epsilon;
    const TokenSequence src = tokenize(c.source_prompt, config);
    std::size_t word = 0;
    if (c.token_index) {
        word = *c.token_index;
    } else {
        const auto w = find_word(src, c.blended_word);
        if (!w) throw InputError("blended word \"" + c.blended_word + "\" is outside the text window");
        word = *w;
    }
    if (word >= src.n_words()) throw InputError("edit word index outside the text window");
    spec.edit_words = {word};
    spec.enable_structure = mode != AblationMode::fix_seed;
    spec.enable_color = mode == AblationMode::full;
    if (mode != AblationMode::fix_seed) {
        const TokenSequence tgt = tokenize(c.target_prompt, config);
        for (const ReweightEntry& r : c.reweight) {
            const auto w = find_word(tgt, r.word);
            if (!w) throw InputError("re-weight word \"" + r.word + "\" is outside the text window");
            spec.reweight.push_back({*w, r.scale, ReweightBranch::target_map});
        }
    }
    return spec;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

CaseResult run_case(const Sampler& sampler, const EditCase& c, const BenchOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    CaseResult out;
    out.id = c.id;
    const ModelConfig& cfg = sampler.model().config();
    try {
        SampleParams params = options.params;
        params.record = true;
        const auto scorer = make_scorer(options.scorer);

        const auto ts = std::chrono::steady_clock::now();
        const SourceResult src = sampler.run_source(c.source_prompt, params);
        out.source_seconds = seconds_since(ts);
        out.cache_bytes = src.cache.bytes();

        const EditSpec full_spec = make_spec(c, AblationMode::full, cfg, options.epsilon);
        const EditMask edit_mask = sampler.edit_mask(full_spec, src.cache);
        out.edit_mask_tokens = edit_mask.count();
        BinaryRaster eval_mask;
        if (c.eval_mask) {
            eval_mask = image_to_raster(read_image(*c.eval_mask));
            if (eval_mask.width != cfg.image_size || eval_mask.height != cfg.image_size) {
                throw InputError("eval mask " + c.eval_mask->string() + " does not match the image size");
            }
            out.eval_mask_origin = "suite";
        } else {
            eval_mask = edit_mask.pixel_mask;
            out.eval_mask_origin = "extracted";
        }
        out.eval_mask_pixels = eval_mask.count();

        out.ok = true;
        for (AblationMode mode : options.modes) {
            ModeResult mr;
            mr.mode = mode;
            const auto tm = std::chrono::steady_clock::now();
            try {
                const EditSpec spec = make_spec(c, mode, cfg, options.epsilon);
                const EditResult res = sampler.run_edit(spec, params, src.cache);
                mr.metrics = evaluate(src.image, res.edited, &eval_mask, options.eval_dilate, c.target_prompt,
                                      scorer.get());
                mr.ok = true;
            } catch (const std::exception& e) {
                mr.error = e.what();
                out.ok = false;
                if (out.error.empty()) out.error = std::string(mode_name(mode)) + ": " + e.what();
            }
            mr.wall_seconds = seconds_since(tm);
            out.modes.push_back(std::move(mr));
        }
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    out.wall_seconds = seconds_since(t0);
    return out;
}

const ModeAggregate* SuiteReport::find(AblationMode m) const {
    for (const ModeAggregate& a : aggregate) {
        if (a.mode == m) return &a;
    }
    return nullptr;
}

bool SuiteReport::ordering_ok() const {
    return canny_ssim_chain.evaluated && canny_ssim_chain.pass && bg_psnr_chain.evaluated && bg_psnr_chain.pass &&
           bg_psnr_strict_gain.evaluated && bg_psnr_strict_gain.pass;
}

SuiteReport aggregate(std::vector<CaseResult> results) {
    SuiteReport report;
    report.cases = std::move(results);
    std::vector<AblationMode> order;
    for (const CaseResult& c : report.cases) {
        for (const ModeResult& m : c.modes) {
            if (std::find(order.begin(), order.end(), m.mode) == order.end()) order.push_back(m.mode);
        }
    }
    std::sort(order.begin(), order.end());
    for (AblationMode mode : order) {
        ModeAggregate agg;
        agg.mode = mode;
        double sem_w = 0.0, sem_e = 0.0;
        bool sem = true;
        for (const CaseResult& c : report.cases) {
            const ModeResult* m = c.find(mode);
            if (!m || !m->ok) continue;
            ++agg.cases;
            agg.canny_ssim += m->metrics.canny_ssim;
            if (m->metrics.bg_psnr_available) {
                agg.bg_psnr += m->metrics.bg_psnr;
                ++agg.bg_psnr_cases;
            }
            if (m->metrics.bg_ssim_available) {
                agg.bg_ssim += m->metrics.bg_ssim;
                ++agg.bg_ssim_cases;
            }
            sem = sem && m->metrics.semantic_available;
            sem_w += m->metrics.semantic_whole;
            sem_e += m->metrics.semantic_edited;
        }
        if (agg.cases == 0) continue;
        const double n = static_cast<double>(agg.cases);
        agg.canny_ssim /= n;
        if (agg.bg_psnr_cases) agg.bg_psnr /= static_cast<double>(agg.bg_psnr_cases);
        if (agg.bg_ssim_cases) agg.bg_ssim /= static_cast<double>(agg.bg_ssim_cases);
        if (sem) {
            agg.semantic_whole = sem_w / n;
            agg.semantic_edited = sem_e / n;
        }
        report.aggregate.push_back(agg);
    }
    if (report.aggregate.empty()) throw Error("benchmark: every case failed; nothing to aggregate");

    const ModeAggregate* f = report.find(AblationMode::fix_seed);
    const ModeAggregate* s = report.find(AblationMode::structure_only);
    const ModeAggregate* u = report.find(AblationMode::full);
    auto psnr_ok = [](const ModeAggregate* a) { return a && a->bg_psnr_cases > 0; };
    if (f && s && u) {
        report.canny_ssim_chain = {true, u->canny_ssim >= s->canny_ssim && s->canny_ssim >= f->canny_ssim};
    }
    if (psnr_ok(f) && psnr_ok(s) && psnr_ok(u)) {
        report.bg_psnr_chain = {true, u->bg_psnr >= s->bg_psnr && s->bg_psnr >= f->bg_psnr};
    }
    if (psnr_ok(f) && psnr_ok(u)) report.bg_psnr_strict_gain = {true, u->bg_psnr > f->bg_psnr};
    return report;
}

namespace {

std::size_t available_memory_bytes() {
    std::ifstream in("/proc/meminfo");
    std::string key;
    std::size_t value = 0;
    std::string unit;
    while (in >> key >> value >> unit) {
        if (key == "MemAvailable:") return value * 1024;
    }
    return 0;
}

}  // namespace

SuiteReport run_suite(const Model& model, const std::vector<EditCase>& cases, const BenchOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cases.empty()) throw InputError("benchmark suite is empty");
    std::size_t workers = std::clamp<std::size_t>(options.jobs, 1, cases.size());
    // Each in-flight case holds one full source cache.
    const std::size_t per_case =
        CacheShape::from(model.config(), options.params.steps).key_count() *
            CacheShape::from(model.config(), options.params.steps).record_bytes() +
        (64u << 20);
    if (const std::size_t avail = available_memory_bytes(); avail != 0) {
        const std::size_t fit = std::max<std::size_t>(1, (avail / 10 * 7) / per_case);
        workers = std::min(workers, fit);
    }

    std::vector<CaseResult> results(cases.size());
    const Sampler sampler(model);
    if (workers == 1) {
        for (std::size_t i = 0; i < cases.size(); ++i) results[i] = run_case(sampler, cases[i], options);
    } else {
        const int threads_each = std::max(1, omp_get_num_procs() / static_cast<int>(workers));
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                omp_set_num_threads(threads_each);
                for (std::size_t i = next++; i < cases.size(); i = next++) {
                    results[i] = run_case(sampler, cases[i], options);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }
    SuiteReport report = aggregate(std::move(results));
    report.workers = workers;
    report.wall_seconds = seconds_since(t0);
    return report;
}

nlohmann::ordered_json report_json(const SuiteReport& report, const BenchOptions& options, const ModelConfig& config) {
    using json = nlohmann::ordered_json;
    json j;
    json params;
    params["steps"] = options.params.steps;
    params["cfg_scale"] = options.params.cfg_scale;
    params["seed"] = options.params.seed;
    params["control_uncond"] = options.params.control_uncond;
    params["epsilon"] = options.epsilon;
    params["eval_dilate"] = options.eval_dilate;
    params["scorer"] = options.scorer;
    json modes = json::array();
    for (AblationMode m : options.modes) modes.push_back(mode_name(m));
    params["modes"] = modes;
    params["model"] = {{"image_size", config.image_size}, {"patch", config.patch},      {"n_text", config.n_text},
                       {"d_model", config.d_model},       {"n_heads", config.n_heads},  {"n_layers", config.n_layers},
                       {"init_seed", config.init_seed}};
    j["params"] = params;

    json per_case = json::array();
    std::size_t ok = 0, cache_total = 0, generations = 0;
    for (const CaseResult& c : report.cases) {
        json jc;
        jc["id"] = c.id;
        jc["ok"] = c.ok;
        if (!c.error.empty()) jc["error"] = c.error;
        jc["eval_mask"] = c.eval_mask_origin;
        jc["eval_mask_pixels"] = c.eval_mask_pixels;
        jc["edit_mask_tokens"] = c.edit_mask_tokens;
        jc["cache_bytes"] = c.cache_bytes;
        json jm = json::object();
        for (const ModeResult& m : c.modes) {
            json e = m.ok ? to_json(m.metrics) : json::object();
            e["ok"] = m.ok;
            if (!m.ok) e["error"] = m.error;
            jm[mode_name(m.mode)] = e;
            ++generations;
        }
        jc["modes"] = jm;
        per_case.push_back(jc);
        ok += c.ok ? 1 : 0;
        cache_total += c.cache_bytes;
        if (c.cache_bytes) ++generations;
    }
    j["per_case"] = per_case;

    json agg = json::object();
    for (const ModeAggregate& a : report.aggregate) {
        agg[mode_name(a.mode)] = {{"cases", a.cases},
                                  {"canny_ssim", a.canny_ssim},
                                  {"bg_psnr", a.bg_psnr},
                                  {"bg_psnr_cases", a.bg_psnr_cases},
                                  {"bg_ssim", a.bg_ssim},
                                  {"bg_ssim_cases", a.bg_ssim_cases},
                                  {"semantic_whole", a.semantic_whole},
                                  {"semantic_edited", a.semantic_edited}};
    }
    j["aggregate"] = agg;

    auto flag = [](const OrderingFlag& f) -> json {
        if (!f.evaluated) return "not_evaluated";
        return f.pass ? "pass" : "fail";
    };
    j["ordering_flags"] = {{"canny_ssim: full >= structure_only >= fix_seed", flag(report.canny_ssim_chain)},
                           {"bg_psnr: full >= structure_only >= fix_seed", flag(report.bg_psnr_chain)},
                           {"bg_psnr: full > fix_seed", flag(report.bg_psnr_strict_gain)}};
    j["runtime"] = {{"cases", report.cases.size()},
                    {"cases_ok", ok},
                    {"cases_failed", report.cases.size() - ok},
                    {"generations", generations},
                    {"cache_bytes_total", cache_total}};
    return j;
}

nlohmann::ordered_json timing_json(const SuiteReport& report, std::size_t requested_jobs) {
    using json = nlohmann::ordered_json;
    json j;
    j["requested_jobs"] = requested_jobs;
    j["workers"] = report.workers;
    j["wall_seconds"] = report.wall_seconds;
    json cases = json::array();
    for (const CaseResult& c : report.cases) {
        json jm = json::object();
        for (const ModeResult& m : c.modes) jm[mode_name(m.mode)] = m.wall_seconds;
        cases.push_back({{"id", c.id}, {"wall_seconds", c.wall_seconds}, {"source_seconds", c.source_seconds}, {"modes", jm}});
    }
    j["per_case"] = cases;
    return j;
}

}  // namespace colorctrl
