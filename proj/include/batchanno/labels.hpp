#ifndef BATCHANNO_LABELS_HPP
#define BATCHANNO_LABELS_HPP

#include <string>
#include <string_view>
#include <vector>

namespace batchanno {

/// Separator between labels in an answer segment.
inline constexpr std::string_view label_separator = " | ";

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_blank(std::string_view text) {
    for (char c : text) {
        if (!is_space(c)) {
            return false;
        }
    }
    return true;
}

/**
 * Canonical form of a cell type label: trimmed, internal whitespace runs
 * collapsed to a single space, ASCII letters lowercased.
 *
 * Applied both when the corpus is built and when predictions are compared,
 * so "B  Cell\n" and "b cell" are the same label everywhere.
 */
inline std::string canonicalize_label(std::string_view label) {
    std::string out;
    out.reserve(label.size());
    bool pending_space = false;
    for (char c : label) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
        out.push_back(c);
    }
    return out;
}

/// Splits on every occurrence of `separator`; always returns at least one part.
inline std::vector<std::string_view> split_exact(std::string_view text, std::string_view separator) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto hit = text.find(separator, start);
        if (hit == std::string_view::npos) {
            parts.push_back(text.substr(start));
            return parts;
        }
        parts.push_back(text.substr(start, hit - start));
        start = hit + separator.size();
    }
}

template<typename Range_>
std::string join(const Range_& parts, std::string_view separator) {
    std::string out;
    bool first = true;
    for (const auto& part : parts) {
        if (!first) {
            out += separator;
        }
        out += part;
        first = false;
    }
    return out;
}

/// Number of whitespace-delimited tokens.
inline std::size_t count_tokens(std::string_view text) {
    std::size_t count = 0;
    bool in_token = false;
    for (char c : text) {
        if (is_space(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

} // namespace batchanno

#endif
