#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "colorctrl/config.hpp"

namespace colorctrl {

// Half-open token index range [begin, end).
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool empty() const { return end <= begin; }
    bool operator==(const TokenSpan&) const = default;
};

inline constexpr std::int32_t kPadToken = 0;

// Fixed-length text token sequence. Each prompt word maps to exactly one token;
// positions past the prompt hold kPadToken.
struct TokenSequence {
    std::vector<std::int32_t> token_ids;  // always n_text long
    // Token whose spatial anchor each position uses (kPadToken on pads). A
    // colour/lightness modifier borrows the anchor of the word it modifies.
    std::vector<std::int32_t> ground_ids;
    std::vector<TokenSpan> word_spans;    // word index -> token range
    std::vector<std::string> words;       // normalised words, parallel to word_spans

    std::size_t n_words() const { return words.size(); }
    // Number of non-pad positions.
    std::size_t used() const { return word_spans.empty() ? 0 : word_spans.back().end; }
    bool operator==(const TokenSequence&) const = default;
};

// Lowercases, splits on whitespace, strips leading/trailing punctuation from
// each word, hashes words into [1, vocab), and truncates/pads to n_text.
// Throws InputError if no word survives.
TokenSequence tokenize(std::string_view prompt, const ModelConfig& config);

// All-pad sequence used by the unconditional guidance pass.
TokenSequence unconditional_tokens(const ModelConfig& config);

// Colour and lightness words ("red", "dark", ...). They bind to the next
// non-modifier word, or the previous one at the end of a prompt.
bool is_modifier(std::string_view normalized_word);

// Applies the tokenizer's word normalisation to a single word.
std::string normalize_word(std::string_view word);

// Index of the first word equal to `word` after normalisation.
std::optional<std::size_t> find_word(const TokenSequence& seq, std::string_view word);

}  // namespace colorctrl
