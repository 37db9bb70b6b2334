#include "colorctrl/tokenizer.hpp"

#include <cctype>
#include <sstream>

#include "colorctrl/errors.hpp"
#include "colorctrl/rng.hpp"

namespace colorctrl {

bool is_modifier(std::string_view w) {
    static constexpr std::string_view kModifiers[] = {
        "red",  "orange", "yellow", "green", "blue", "purple", "violet", "pink",  "brown",  "black",
        "white", "gray",  "grey",   "golden", "gold", "silver", "cyan",   "teal",  "magenta", "beige",
        "dark", "light",  "bright", "pale",  "deep", "vivid",  "colored", "coloured",
    };
    for (std::string_view m : kModifiers) {
        if (w == m) return true;
    }
    return false;
}

std::string normalize_word(std::string_view word) {
    std::size_t b = 0;
    std::size_t e = word.size();
    auto is_word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    while (b < e && !is_word_char(word[b])) ++b;
    while (e > b && !is_word_char(word[e - 1])) --e;
    std::string out(word.substr(b, e - b));
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

TokenSequence tokenize(std::string_view prompt, const ModelConfig& config) {
    TokenSequence seq;
    seq.token_ids.assign(config.n_text, kPadToken);
    std::istringstream in{std::string(prompt)};
    std::string raw;
    while (in >> raw) {
        std::string word = normalize_word(raw);
        if (word.empty()) continue;
        if (seq.words.size() == config.n_text) break;
        const std::size_t pos = seq.words.size();
        const std::uint64_t h = fnv1a64(word.data(), word.size());
        seq.token_ids[pos] = static_cast<std::int32_t>(1 + h % (config.vocab_size - 1));
        seq.word_spans.push_back({pos, pos + 1});
        seq.words.push_back(std::move(word));
    }
    if (seq.words.empty()) throw InputError("prompt is empty");

    seq.ground_ids = seq.token_ids;
    const std::size_t n = seq.words.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_modifier(seq.words[i])) continue;
        std::size_t j = i + 1;
        while (j < n && is_modifier(seq.words[j])) ++j;
        if (j == n) {
            j = i;
            while (j > 0 && is_modifier(seq.words[j])) --j;
        }
        seq.ground_ids[i] = seq.token_ids[j];
    }
    return seq;
}

TokenSequence unconditional_tokens(const ModelConfig& config) {
    TokenSequence seq;
    seq.token_ids.assign(config.n_text, kPadToken);
    seq.ground_ids = seq.token_ids;
    return seq;
}

std::optional<std::size_t> find_word(const TokenSequence& seq, std::string_view word) {
    const std::string needle = normalize_word(word);
    for (std::size_t i = 0; i < seq.words.size(); ++i) {
        if (seq.words[i] == needle) return i;
    }
    return std::nullopt;
}

}  // namespace colorctrl
