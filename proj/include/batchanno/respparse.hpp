#ifndef BATCHANNO_RESPPARSE_HPP
#define BATCHANNO_RESPPARSE_HPP

#include "errors.hpp"
#include "labels.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file respparse.hpp
 *
 * @brief Strict validation and decomposition of tagged model responses.
 *
 * A well-formed response is, in order: optional whitespace, one
 * `<think>...</think>` block, optional whitespace, one `<answer>...</answer>`
 * block, optional whitespace. Tags are matched exactly and case-sensitively,
 * no tag may appear twice, and the answer must contain a non-whitespace
 * character.
 */

namespace batchanno {

inline constexpr std::string_view think_open = "<think>";
inline constexpr std::string_view think_close = "</think>";
inline constexpr std::string_view answer_open = "<answer>";
inline constexpr std::string_view answer_close = "</answer>";

enum class FormatFailure {
    MissingThink,
    MissingAnswer,
    DuplicateTag,
    ExtraText,
    EmptyAnswer,
    NestedTags,
};

inline std::string_view to_string(FormatFailure failure) {
    switch (failure) {
    case FormatFailure::MissingThink: return "MissingThink";
    case FormatFailure::MissingAnswer: return "MissingAnswer";
    case FormatFailure::DuplicateTag: return "DuplicateTag";
    case FormatFailure::ExtraText: return "ExtraText";
    case FormatFailure::EmptyAnswer: return "EmptyAnswer";
    case FormatFailure::NestedTags: return "NestedTags";
    }
    return "Unknown";
}

struct FormatVerdict {
    std::optional<FormatFailure> failure;

    bool valid() const { return !failure.has_value(); }
};

struct ParsedResponse {
    std::string reasoning;
    std::vector<std::string> labels;
    std::size_t raw_length = 0;
};

namespace detail {

struct TagScan {
    // Index order: think_open, think_close, answer_open, answer_close.
    std::array<std::size_t, 4> count{};
    std::array<std::size_t, 4> position{};
};

inline TagScan scan_tags(std::string_view response) {
    constexpr std::array<std::string_view, 4> tags{think_open, think_close, answer_open, answer_close};
    TagScan scan;
    for (std::size_t t = 0; t < tags.size(); ++t) {
        std::size_t from = 0;
        while (true) {
            const auto hit = response.find(tags[t], from);
            if (hit == std::string_view::npos) {
                break;
            }
            if (scan.count[t] == 0) {
                scan.position[t] = hit;
            }
            ++scan.count[t];
            from = hit + 1;
        }
    }
    return scan;
}

} // namespace detail

/**
 * Classifies a response. Failures are reported in a fixed priority order:
 * a missing think block, then a missing answer block, then repeated tags,
 * then misordered or overlapping blocks, then stray text, then an empty answer.
 */
inline FormatVerdict validate_format(std::string_view response) {
    const auto scan = detail::scan_tags(response);
    const auto& count = scan.count;
    const auto& pos = scan.position;

    if (count[0] == 0 || count[1] == 0) {
        return {FormatFailure::MissingThink};
    }
    if (count[2] == 0 || count[3] == 0) {
        return {FormatFailure::MissingAnswer};
    }
    for (auto c : count) {
        if (c > 1) {
            return {FormatFailure::DuplicateTag};
        }
    }

    const std::size_t think_begin = pos[0];
    const std::size_t think_end = pos[1] + think_close.size();
    const std::size_t answer_begin = pos[2];
    const std::size_t answer_end = pos[3] + answer_close.size();

    // A closing tag ahead of its opening tag.
    if (pos[1] < think_begin + think_open.size() || pos[3] < answer_begin + answer_open.size()) {
        return {FormatFailure::ExtraText};
    }
    const bool disjoint = think_end <= answer_begin || answer_end <= think_begin;
    if (!disjoint) {
        return {FormatFailure::NestedTags};
    }
    if (answer_end <= think_begin) {
        return {FormatFailure::ExtraText};
    }

    if (!is_blank(response.substr(0, think_begin)) ||
        !is_blank(response.substr(think_end, answer_begin - think_end)) ||
        !is_blank(response.substr(answer_end))) {
        return {FormatFailure::ExtraText};
    }

    const auto inner_begin = answer_begin + answer_open.size();
    if (is_blank(response.substr(inner_begin, pos[3] - inner_begin))) {
        return {FormatFailure::EmptyAnswer};
    }
    return {};
}

/**
 * Splits a well-formed response into its reasoning and canonicalized labels.
 * The label count is whatever the answer holds; nothing is padded or dropped.
 *
 * Throws `ContractViolation` if `validate_format(response)` fails.
 */
inline ParsedResponse parse_response(std::string_view response) {
    const auto verdict = validate_format(response);
    if (!verdict.valid()) {
        throw ContractViolation("parse_response called on an invalid response (" +
                                std::string(to_string(*verdict.failure)) + ")");
    }

    const auto think_inner = response.find(think_open) + think_open.size();
    const auto think_stop = response.find(think_close);
    const auto answer_inner = response.find(answer_open) + answer_open.size();
    const auto answer_stop = response.find(answer_close);

    ParsedResponse parsed;
    parsed.reasoning = std::string(response.substr(think_inner, think_stop - think_inner));
    for (auto part : split_exact(response.substr(answer_inner, answer_stop - answer_inner), label_separator)) {
        parsed.labels.push_back(canonicalize_label(part));
    }
    parsed.raw_length = count_tokens(response);
    return parsed;
}

/// Parses when valid, otherwise returns nothing.
inline std::optional<ParsedResponse> try_parse_response(std::string_view response) {
    if (!validate_format(response).valid()) {
        return std::nullopt;
    }
    return parse_response(response);
}

/// Formats labels as a complete tagged response; the inverse of `parse_response`.
inline std::string render_answer(std::string_view reasoning, std::span<const std::string> labels) {
    std::string out;
    out += think_open;
    out += reasoning;
    out += think_close;
    out += answer_open;
    out += join(labels, label_separator);
    out += answer_close;
    return out;
}

} // namespace batchanno

#endif
