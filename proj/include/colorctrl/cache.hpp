#pragma once

// Write-once store of the source branch's attention records, replayed
// read-only by any number of target branches.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "colorctrl/attention_control.hpp"
#include "colorctrl/config.hpp"
#include "colorctrl/image.hpp"
#include "colorctrl/model.hpp"
#include "colorctrl/tokenizer.hpp"

namespace colorctrl {

struct CacheKey {
    std::size_t step = 0;
    std::size_t layer = 0;
    std::size_t head = 0;
    Pass pass = Pass::cond;

    bool operator==(const CacheKey&) const = default;
};

struct CacheShape {
    std::size_t steps = 0;
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::size_t n_text = 0;
    std::size_t n_vision = 0;
    std::size_t d_head = 0;

    static CacheShape from(const ModelConfig& config, std::size_t steps);

    std::size_t n_tokens() const { return n_text + n_vision; }
    // steps x layers x heads x {cond, uncond}
    std::size_t key_count() const { return steps * layers * heads * 2; }
    // Dense index, step-major then layer, head, pass. Throws ControlError when out of range.
    std::size_t index(const CacheKey& key) const;
    CacheKey key_at(std::size_t index) const;
    std::size_t record_floats() const;
    std::size_t record_bytes() const { return record_floats() * sizeof(float); }

    bool operator==(const CacheShape&) const = default;
};

// Provenance of the source branch a cache came from.
struct SourceInfo {
    std::string prompt;
    ImageBuffer image;
    std::uint64_t config_digest = 0;
    std::uint64_t params_digest = 0;
    std::uint64_t noise_digest = 0;

    bool operator==(const SourceInfo&) const = default;
};

class BranchCache {
public:
    BranchCache() = default;
    // budget_bytes bounds the record payload; 0 = unbounded.
    BranchCache(const CacheShape& shape, std::size_t budget_bytes = 0);

    const CacheShape& shape() const { return shape_; }
    std::size_t budget_bytes() const { return budget_; }

    // StateError after finalize or on a duplicate key, ControlError on a key or
    // tensor shape outside the cache shape, ResourceError past the budget.
    void insert(AttentionRecord&& record);

    // Builds the vision-to-text accumulator and freezes the cache.
    // StateError when already finalized or when any key is missing.
    void finalize();
    bool finalized() const { return finalized_; }

    bool contains(const CacheKey& key) const;
    const AttentionRecord* find(const CacheKey& key) const;
    // ControlError when absent.
    const AttentionRecord& at(const CacheKey& key) const;

    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    std::size_t bytes() const { return bytes_; }
    // Present records in key order.
    std::vector<const AttentionRecord*> records() const;

    // Sum over conditional records of map.vt, n_vision x n_text row-major.
    // Available after finalize.
    std::span<const double> vt_sums() const { return vt_sums_; }
    std::size_t cond_records() const { return cond_records_; }

    // Mean vision-to-text attention onto `spans`, min-max normalised.
    MaskScores mask_scores(std::span<const TokenSpan> spans) const;

    SourceInfo& source() { return source_; }
    const SourceInfo& source() const { return source_; }

    // Binary file layout documented in docs/cache_format.md.
    void save(const std::filesystem::path& path) const;
    static BranchCache load(const std::filesystem::path& path);

private:
    CacheShape shape_{};
    std::size_t budget_ = 0;
    std::vector<std::optional<AttentionRecord>> slots_;
    std::size_t count_ = 0;
    std::size_t bytes_ = 0;
    bool finalized_ = false;
    std::vector<double> vt_sums_;
    std::size_t cond_records_ = 0;
    SourceInfo source_;
};

inline constexpr char kCacheMagic[4] = {'C', 'C', 'C', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

}  // namespace colorctrl
