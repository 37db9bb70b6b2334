#pragma once

// Ablation benchmark over a suite of prompt-pair colour edits.
//
// Suite file: a JSON array of case objects
//   {"id": "fox-orange",                      required, unique
//    "source_prompt": "a white fox ...",      required
//    "target_prompt": "an orange fox ...",    required
//    "blended_word": "fox",                   mask keyword, must be in both prompts
//    "token_index": 2,                        word index into the source prompt; overrides blended_word
//    "reweight": {"orange": 1.5},             optional, target-prompt word -> scale >= 0
//    "eval_mask": "masks/fox.png"}            optional ground-truth region, relative to the suite file
// At least one of blended_word / token_index is required.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "colorctrl/metrics.hpp"
#include "colorctrl/model.hpp"
#include "colorctrl/sampler.hpp"
#include "json.hpp"

namespace colorctrl {

enum class AblationMode { fix_seed, structure_only, full };

const char* mode_name(AblationMode m);
// Comma-separated names, or "all". Throws InputError on an unknown name.
std::vector<AblationMode> parse_modes(std::string_view list);

struct ReweightEntry {
    std::string word;
    float scale = 1.0f;
};

struct EditCase {
    std::string id;
    std::string source_prompt;
    std::string target_prompt;
    std::string blended_word;
    std::optional<std::size_t> token_index;
    std::vector<ReweightEntry> reweight;
    std::optional<std::filesystem::path> eval_mask;  // already resolved against the suite directory
};

// Throws LoadError with file:line context on malformed JSON or schema errors.
std::vector<EditCase> parse_suite(std::string_view text, const std::string& origin = "<suite>",
                                  const std::filesystem::path& base_dir = {});
std::vector<EditCase> load_suite(const std::filesystem::path& path);

struct BenchOptions {
    SampleParams params{};
    std::vector<AblationMode> modes{AblationMode::fix_seed, AblationMode::structure_only, AblationMode::full};
    float epsilon = kDefaultMaskEpsilon;
    std::size_t eval_dilate = kDefaultEvalDilation;
    std::string scorer = "none";
    std::size_t jobs = 1;
};

struct ModeResult {
    AblationMode mode = AblationMode::fix_seed;
    bool ok = false;
    std::string error;
    MetricsReport metrics;
    double wall_seconds = 0.0;
};

struct CaseResult {
    std::string id;
    bool ok = false;  // source branch and every mode succeeded
    std::string error;
    std::string eval_mask_origin;  // "suite" or "extracted"
    std::size_t eval_mask_pixels = 0;
    std::size_t edit_mask_tokens = 0;
    std::size_t cache_bytes = 0;
    double source_seconds = 0.0;
    double wall_seconds = 0.0;
    std::vector<ModeResult> modes;

    const ModeResult* find(AblationMode m) const;
};

// Edit spec a mode runs for a case; fails when the case's words do not
// resolve against the model's tokenizer.
EditSpec make_spec(const EditCase& c, AblationMode mode, const ModelConfig& config, float epsilon);

// Source branch once, then one target branch per mode. Errors are captured in
// the result instead of thrown.
CaseResult run_case(const Sampler& sampler, const EditCase& c, const BenchOptions& options);

struct ModeAggregate {
    AblationMode mode = AblationMode::fix_seed;
    std::size_t cases = 0;
    double canny_ssim = 0.0;
    double bg_psnr = 0.0;
    // Background means skip cases whose mask leaves nothing to measure. The
    // eval mask is shared by every mode, so all modes skip the same cases.
    std::size_t bg_psnr_cases = 0;
    double bg_ssim = 0.0;
    std::size_t bg_ssim_cases = 0;
    double semantic_whole = kSemanticUnavailable;
    double semantic_edited = kSemanticUnavailable;
};

struct OrderingFlag {
    bool evaluated = false;  // every mode of the chain has an aggregate
    bool pass = false;
};

struct SuiteReport {
    std::vector<CaseResult> cases;
    std::vector<ModeAggregate> aggregate;
    OrderingFlag canny_ssim_chain;     // full >= structure_only >= fix_seed
    OrderingFlag bg_psnr_chain;        // full >= structure_only >= fix_seed
    OrderingFlag bg_psnr_strict_gain;  // full > fix_seed
    std::size_t workers = 1;
    double wall_seconds = 0.0;

    const ModeAggregate* find(AblationMode m) const;
    bool ordering_ok() const;
};

// Means over the successful cases of each mode plus ordering flags. Throws
// Error when no case succeeded.
SuiteReport aggregate(std::vector<CaseResult> results);

// Runs every case, `options.jobs` at a time (reduced when the attention
// caches would not fit in available memory). Results keep suite order.
SuiteReport run_suite(const Model& model, const std::vector<EditCase>& cases, const BenchOptions& options);

// Deterministic report: no wall-clock or worker-count fields.
nlohmann::ordered_json report_json(const SuiteReport& report, const BenchOptions& options, const ModelConfig& config);
// Wall-clock timings, kept apart from the report.
nlohmann::ordered_json timing_json(const SuiteReport& report, std::size_t requested_jobs);

}  // namespace colorctrl
