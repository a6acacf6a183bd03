#ifndef BATCHANNO_PROMPTGEN_HPP
#define BATCHANNO_PROMPTGEN_HPP

#include "corpus.hpp"
#include "errors.hpp"
#include "jsonl.hpp"
#include "labels.hpp"

#include <optional>
#include <string>
#include <string_view>

/**
 * @file promptgen.hpp
 *
 * @brief Prompt texts for the three task variants.
 *
 * Layout of a rendered prompt (one user message, newline separated):
 *
 *     <instruction paragraph>
 *     Context: <donor context>            (omitted when the context is empty)
 *     Cell 1: GENE1, GENE2, ...
 *     ...
 *     Candidate cell types:               (omitted for the open-ended variant)
 *     - <label>
 *     ...
 */

namespace batchanno {

enum class PromptKind { batch_constrained, cell_constrained, open_ended };

inline std::string_view to_string(PromptKind kind) {
    switch (kind) {
    case PromptKind::batch_constrained: return "batch_constrained";
    case PromptKind::cell_constrained: return "cell_constrained";
    case PromptKind::open_ended: return "open_ended";
    }
    return "unknown";
}

struct RenderedPrompt {
    std::string instance_id;
    PromptKind kind = PromptKind::batch_constrained;
    std::string text;
    std::optional<std::size_t> cell_index;
};

namespace detail {

inline std::string batch_instruction(std::size_t n, bool with_candidates) {
    const auto count = std::to_string(n);
    std::string text =
        "You are an expert assistant specialized in cell type annotation. "
        "You will be given a batch of " + count + " cells from the same donor, where each cell represents a unique cell type. "
        "For each cell, the top-expressed genes are provided in descending order of expression. "
        "Using both the gene expression data and donor information, determine the correct cell type for each cell. ";
    if (with_candidates) {
        text += "You will also receive a list of " + count +
                " candidate cell types, and each candidate must be assigned to exactly one cell. ";
    }
    text +=
        "Ensure that you consider all cells and candidate types together, rather than annotating each cell individually. "
        "Include your detailed reasoning within <think> and </think> tags, and provide your final answer within "
        "<answer> and </answer> tags. "
        "The final answer should be a single string listing the assigned cell types in order, separated by ' | '.";
    return text;
}

inline constexpr std::string_view cell_instruction =
    "You are an expert assistant specialized in cell type annotation. "
    "You will be given the gene expression profile of a single cell from a specific donor. "
    "The top expressed genes are listed in descending order. "
    "Use both gene expression and donor context to determine the correct cell type. "
    "You will also receive a list of candidate cell types\xE2\x80\x94" "choose the one that best fits this cell. "
    "Include your detailed reasoning within <think> and </think> tags, and provide your final answer within "
    "<answer> and </answer> tags. "
    "The final answer should be a single string with exactly one cell type.";

inline void append_context(std::string& text, const BatchInstance& instance) {
    if (!instance.context.empty()) {
        text += "\nContext: ";
        text += instance.context;
    }
}

inline void append_candidates(std::string& text, const BatchInstance& instance) {
    text += "\nCandidate cell types:";
    for (const auto& label : instance.candidates) {
        text += "\n- ";
        text += label;
    }
}

inline void append_cells(std::string& text, const BatchInstance& instance) {
    for (std::size_t i = 0; i < instance.cells.size(); ++i) {
        text += "\nCell " + std::to_string(i + 1) + ": ";
        text += join(instance.cells[i].top_genes, ", ");
    }
}

} // namespace detail

inline RenderedPrompt render_batch_prompt(const BatchInstance& instance) {
    auto text = detail::batch_instruction(instance.size(), true);
    detail::append_context(text, instance);
    detail::append_cells(text, instance);
    detail::append_candidates(text, instance);
    return {instance.instance_id, PromptKind::batch_constrained, std::move(text), std::nullopt};
}

/// Single-cell prompt that still lists all N candidates.
inline RenderedPrompt render_cell_prompt(const BatchInstance& instance, std::size_t cell_index) {
    if (cell_index >= instance.size()) {
        throw IndexError("cell index " + std::to_string(cell_index) + " out of range for instance " +
                         instance.instance_id + " with " + std::to_string(instance.size()) + " cells");
    }
    std::string text(detail::cell_instruction);
    detail::append_context(text, instance);
    text += "\nCell: ";
    text += join(instance.cells[cell_index].top_genes, ", ");
    detail::append_candidates(text, instance);
    return {instance.instance_id, PromptKind::cell_constrained, std::move(text), cell_index};
}

/// Batch prompt without the candidate list or the one-to-one assignment sentence.
inline RenderedPrompt render_open_prompt(const BatchInstance& instance) {
    auto text = detail::batch_instruction(instance.size(), false);
    detail::append_context(text, instance);
    detail::append_cells(text, instance);
    return {instance.instance_id, PromptKind::open_ended, std::move(text), std::nullopt};
}

inline Json prompt_to_json(const RenderedPrompt& prompt) {
    Json object;
    object["instance_id"] = prompt.instance_id;
    object["variant"] = to_string(prompt.kind);
    if (prompt.cell_index) {
        object["cell_index"] = *prompt.cell_index;
    } else {
        object["cell_index"] = nullptr;
    }
    object["prompt"] = prompt.text;
    return object;
}

} // namespace batchanno

#endif
