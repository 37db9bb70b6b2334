// colorctrl: generate, edit, metrics and bench subcommands over the toy model.
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "colorctrl/bench.hpp"
#include "colorctrl/errors.hpp"
#include "colorctrl/image_io.hpp"
#include "colorctrl/metrics.hpp"
#include "colorctrl/sampler.hpp"
#include "colorctrl/tokenizer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace colorctrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Bad flag values found after CLI11 parsing. Maps to exit 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelFlags {
    std::size_t layers = ModelConfig{}.n_layers;
    std::size_t heads = ModelConfig{}.n_heads;
    std::size_t d_model = ModelConfig{}.d_model;
    std::size_t size = ModelConfig{}.image_size;

    void add(CLI::App& app) {
        app.add_option("--layers", layers, "Transformer blocks")->capture_default_str();
        app.add_option("--heads", heads, "Attention heads")->capture_default_str();
        app.add_option("--d-model", d_model, "Hidden width")->capture_default_str();
        app.add_option("--size", size, "Image side in pixels")->capture_default_str();
    }

    ModelConfig config() const {
        ModelConfig c;
        c.n_layers = layers;
        c.n_heads = heads;
        c.d_model = d_model;
        c.image_size = size;
        try {
            c.validate();
        } catch (const InputError& e) {
            throw UsageError(std::string("model overrides: ") + e.what());
        }
        return c;
    }
};

struct SampleFlags {
    SampleParams p;

    void add(CLI::App& app) {
        app.add_option("--steps", p.steps, "Euler steps")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--cfg", p.cfg_scale, "Classifier-free guidance scale (>= 1)")->capture_default_str();
        app.add_option("--seed", p.seed, "Noise seed")->capture_default_str();
    }

    SampleParams params() const {
        try {
            p.validate();
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }
        return p;
    }
};

void add_format(CLI::App& app, std::string& fmt) {
    app.add_option("--format", fmt, "Image format: png, or pnm for PGM/PPM")
        ->capture_default_str()
        ->check(CLI::IsMember({"png", "pnm"}));
}

ImageFormat format_of(const std::string& name) { return name == "pnm" ? ImageFormat::pnm : ImageFormat::png; }

// --out-dir, else $COLORCTRL_OUT_DIR, else the working directory.
fs::path resolve_out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("COLORCTRL_OUT_DIR"); env && *env) return env;
    return ".";
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

fs::path with_ext(fs::path base, const std::string& fmt, const ImageBuffer& img) {
    base += image_extension(format_of(fmt), img.channels);
    return base;
}

// ---- generate

struct GenerateCmd {
    ModelFlags model;
    SampleFlags sample;
    std::string prompt;
    std::string out;
    std::string cache_out;
    std::string format = "png";

    void add(CLI::App& parent) {
        CLI::App* app = parent.add_subcommand("generate", "Sample one image from a prompt");
        app->add_option("--prompt", prompt, "Text prompt")->required();
        app->add_option("--out", out, "Output image path (default: <out dir>/generated.<ext>)");
        app->add_option("--cache-out", cache_out, "Also record the attention cache to this file");
        add_format(*app, format);
        sample.add(*app);
        model.add(*app);
        app->callback([this] { run(); });
    }

    void run() {
        const ModelConfig cfg = model.config();
        SampleParams p = sample.params();
        const Model m(cfg);
        const Sampler s(m);
        ImageBuffer img;
        if (!cache_out.empty()) {
            SourceResult r = s.run_source(prompt, p);
            fs::path cp(cache_out);
            if (cp.has_parent_path()) ensure_dir(cp.parent_path());
            r.cache.save(cp);
            img = std::move(r.image);
        } else {
            p.record = false;
            img = s.generate(prompt, p);
        }
        fs::path path = out.empty() ? with_ext(resolve_out_dir("") / "generated", format, img) : fs::path(out);
        if (path.has_parent_path()) ensure_dir(path.parent_path());
        write_image(path, img, format_of(format));
        std::cout << path.string() << "\n";
    }
};

// ---- edit

// "[src:]word=scale"
ReweightTerm parse_reweight(const std::string& arg, const TokenSequence& src, const TokenSequence& tgt) {
    const auto eq = arg.rfind('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--reweight expects [src:]word=scale, got '" + arg + "'");
    std::string word = arg.substr(0, eq);
    ReweightTerm t;
    t.branch = ReweightBranch::target_map;
    if (word.rfind("src:", 0) == 0) {
        t.branch = ReweightBranch::source_map;
        word = word.substr(4);
    }
    try {
        std::size_t used = 0;
        const std::string num = arg.substr(eq + 1);
        t.scale = std::stof(num, &used);
        if (used != num.size()) throw std::invalid_argument(num);
    } catch (const std::exception&) {
        throw UsageError("--reweight: bad scale in '" + arg + "'");
    }
    if (!(t.scale >= 0.0f)) throw UsageError("--reweight: scale must be >= 0 in '" + arg + "'");
    const TokenSequence& seq = t.branch == ReweightBranch::source_map ? src : tgt;
    const auto idx = find_word(seq, word);
    if (!idx) {
        throw UsageError("--reweight: '" + word + "' is not a word of the " +
                         (t.branch == ReweightBranch::source_map ? "source" : "target") + " prompt");
    }
    t.word_index = *idx;
    return t;
}

struct EditCmd {
    ModelFlags model;
    SampleFlags sample;
    std::string source_prompt;
    std::string target_prompt;
    std::vector<std::string> words;
    std::vector<std::size_t> word_indices;
    float epsilon = kDefaultMaskEpsilon;
    std::vector<std::string> reweights;
    bool no_structure = false;
    bool no_color = false;
    bool no_uncond = false;
    std::size_t mask_dilate = 0;
    std::string cache_in;
    std::string out_dir;
    std::string format = "png";

    void add(CLI::App& parent) {
        CLI::App* app = parent.add_subcommand("edit", "Edit a generated image by changing its prompt");
        app->add_option("--source-prompt", source_prompt, "Prompt of the source image")->required();
        app->add_option("--target-prompt", target_prompt, "Prompt of the edited image")->required();
        app->add_option("--word", words, "Source-prompt word whose attention defines the edit mask (repeatable)");
        app->add_option("--word-index", word_indices, "Explicit source-prompt word index (repeatable)");
        app->add_option("--epsilon", epsilon, "Mask threshold on normalised attention, in (0, 1)")
            ->capture_default_str();
        app->add_option("--reweight", reweights,
                        "Attention re-weighting [src:]word=scale; word from the target prompt, or the source prompt "
                        "with src: (repeatable)");
        app->add_flag("--no-structure", no_structure, "Disable vision-to-vision map replacement");
        app->add_flag("--no-color", no_color, "Disable value-token preservation outside the mask");
        app->add_flag("--no-uncond-control", no_uncond, "Leave the unconditional pass uncontrolled");
        app->add_option("--mask-dilate", mask_dilate, "Token-grid dilation radius of the edit mask")
            ->capture_default_str();
        app->add_option("--cache-in", cache_in, "Reuse a cache written by generate --cache-out");
        app->add_option("--out-dir", out_dir, "Output directory (default: $COLORCTRL_OUT_DIR, else .)");
        add_format(*app, format);
        sample.add(*app);
        model.add(*app);
        app->callback([this] { run(); });
    }

    void run() {
        const ModelConfig cfg = model.config();
        SampleParams p = sample.params();
        p.control_uncond = !no_uncond;

        TokenSequence src_tokens;
        TokenSequence tgt_tokens;
        try {
            src_tokens = tokenize(source_prompt, cfg);
            tgt_tokens = tokenize(target_prompt, cfg);
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }

        EditSpec spec;
        spec.source_prompt = source_prompt;
        spec.target_prompt = target_prompt;
        spec.epsilon = epsilon;
        spec.enable_structure = !no_structure;
        spec.enable_color = !no_color;
        spec.mask_dilate = mask_dilate;
        for (const std::string& w : words) {
            const auto idx = find_word(src_tokens, w);
            if (!idx) throw UsageError("--word '" + w + "' is not in the source prompt; pass --word-index instead");
            spec.edit_words.push_back(*idx);
        }
        for (std::size_t i : word_indices) {
            if (i >= src_tokens.n_words()) {
                throw UsageError("--word-index " + std::to_string(i) + " out of range (source prompt has " +
                                 std::to_string(src_tokens.n_words()) + " words)");
            }
            spec.edit_words.push_back(i);
        }
        for (const std::string& r : reweights) spec.reweight.push_back(parse_reweight(r, src_tokens, tgt_tokens));
        if (spec.enable_color && spec.edit_words.empty()) {
            throw UsageError("colour preservation needs --word or --word-index (or pass --no-color)");
        }
        try {
            spec.validate();
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }

        const Model m(cfg);
        const Sampler s(m);
        std::optional<BranchCache> loaded;
        std::optional<SourceResult> fresh;
        const BranchCache* cache = nullptr;
        if (!cache_in.empty()) {
            loaded.emplace(BranchCache::load(cache_in));
            cache = &*loaded;
        } else {
            fresh.emplace(s.run_source(source_prompt, p));
            cache = &fresh->cache;
        }
        const EditResult r = s.run_edit(spec, p, *cache);

        const fs::path dir = resolve_out_dir(out_dir);
        ensure_dir(dir);
        const ImageBuffer mask_img = raster_to_image(r.mask.pixel_mask);
        const fs::path paths[] = {with_ext(dir / "source", format, r.source), with_ext(dir / "edited", format, r.edited),
                                  with_ext(dir / "mask", format, mask_img)};
        write_image(paths[0], r.source, format_of(format));
        write_image(paths[1], r.edited, format_of(format));
        write_image(paths[2], mask_img, format_of(format));
        write_text(dir / "control_log.json", control_log_json(spec, r).dump(2) + "\n");
        for (const fs::path& path : paths) std::cout << path.string() << "\n";
        std::cout << (dir / "control_log.json").string() << "\n";
    }
};

// ---- metrics

ImageBuffer read_checked(const std::string& path) {
    if (!fs::exists(path)) throw IoError("no such file: " + path);
    return read_image(path);
}

struct MetricsCmd {
    std::string ref;
    std::string edited;
    std::string mask;
    std::size_t dilate = kDefaultEvalDilation;
    std::string scorer = "none";
    std::string text;

    void add(CLI::App& parent) {
        CLI::App* app = parent.add_subcommand("metrics", "Compare an edited image with its reference; prints JSON");
        app->add_option("--ref", ref, "Reference (source) image")->required();
        app->add_option("--edited", edited, "Edited image")->required();
        app->add_option("--mask", mask, "Edit-region mask image; nonzero = edited (default: no edit region)");
        app->add_option("--dilate", dilate, "Dilation radius applied to the mask before taking its complement")
            ->capture_default_str();
        app->add_option("--scorer", scorer, "Semantic scorer id")
            ->capture_default_str()
            ->check(CLI::IsMember(scorer_ids()));
        app->add_option("--text", text, "Text for the semantic scorer");
        app->callback([this] { run(); });
    }

    void run() {
        const ImageBuffer a = read_checked(ref);
        const ImageBuffer b = read_checked(edited);
        std::optional<BinaryRaster> m;
        if (!mask.empty()) m = image_to_raster(read_checked(mask));
        const auto sc = make_scorer(scorer);
        const MetricsReport r = evaluate(a, b, m ? &*m : nullptr, dilate, text, sc.get());
        std::cout << to_json(r).dump(2) << "\n";
    }
};

// ---- bench

struct BenchCmd {
    ModelFlags model;
    SampleFlags sample;
    std::string suite;
    std::string modes = "all";
    std::string out;
    std::size_t jobs = 1;
    bool strict = false;
    float epsilon = kDefaultMaskEpsilon;
    std::size_t eval_dilate = kDefaultEvalDilation;
    std::string scorer = "none";

    void add(CLI::App& parent) {
        CLI::App* app = parent.add_subcommand("bench", "Run the ablation suite and write a report");
        app->add_option("--suite", suite, "Suite JSON file")->required();
        app->add_option("--modes", modes, "Comma list of fix_seed,structure_only,full, or all")->capture_default_str();
        app->add_option("--out", out, "Report path (default: <out dir>/bench_report.json)");
        app->add_option("--jobs", jobs, "Cases run concurrently")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_flag("--strict", strict, "Exit 1 when an ordering flag fails");
        app->add_option("--epsilon", epsilon, "Mask threshold")->capture_default_str();
        app->add_option("--eval-dilate", eval_dilate, "Dilation of the evaluation mask")->capture_default_str();
        app->add_option("--scorer", scorer, "Semantic scorer id")
            ->capture_default_str()
            ->check(CLI::IsMember(scorer_ids()));
        sample.add(*app);
        model.add(*app);
        app->callback([this] { status = run(); });
    }

    int status = kExitOk;

    int run() {
        const ModelConfig cfg = model.config();
        BenchOptions opt;
        opt.params = sample.params();
        try {
            opt.modes = parse_modes(modes);
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }
        if (!(epsilon > 0.0f && epsilon < 1.0f)) throw UsageError("--epsilon must be in (0, 1)");
        opt.epsilon = epsilon;
        opt.eval_dilate = eval_dilate;
        opt.scorer = scorer;
        opt.jobs = jobs;

        const std::vector<EditCase> cases = load_suite(suite);
        const Model m(cfg);
        const SuiteReport report = run_suite(m, cases, opt);

        const fs::path path = out.empty() ? resolve_out_dir("") / "bench_report.json" : fs::path(out);
        write_text(path, report_json(report, opt, cfg).dump(2) + "\n");
        fs::path timing = path;
        timing.replace_extension(".timing.json");
        write_text(timing, timing_json(report, jobs).dump(2) + "\n");

        std::size_t failed = 0;
        for (const CaseResult& c : report.cases) {
            if (!c.ok) {
                ++failed;
                std::cerr << "case " << c.id << " failed: " << c.error << "\n";
            }
        }
        std::printf("%-16s %10s %10s %10s\n", "mode", "canny_ssim", "bg_psnr", "bg_ssim");
        for (const ModeAggregate& a : report.aggregate) {
            std::printf("%-16s %10.4f %10.3f %10.4f\n", mode_name(a.mode), a.canny_ssim, a.bg_psnr, a.bg_ssim);
        }
        auto flag = [](const OrderingFlag& f) { return !f.evaluated ? "not_evaluated" : f.pass ? "pass" : "fail"; };
        std::printf("canny_ssim chain: %s\nbg_psnr chain: %s\nbg_psnr full > fix_seed: %s\n",
                    flag(report.canny_ssim_chain), flag(report.bg_psnr_chain), flag(report.bg_psnr_strict_gain));
        std::printf("%zu cases, %zu failed, %zu workers, %.1f s\n", report.cases.size(), failed, report.workers,
                    report.wall_seconds);
        std::cout << path.string() << "\n";
        if (strict && !report.ordering_ok()) {
            std::cerr << "ordering check failed\n";
            return kExitRuntime;
        }
        return kExitOk;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention-control colour editing on a toy joint-attention diffusion transformer"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    GenerateCmd generate;
    EditCmd edit;
    MetricsCmd metrics;
    BenchCmd bench;
    generate.add(app);
    edit.add(app);
    metrics.add(app);
    bench.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const colorctrl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return bench.status;
}
