#ifndef BATCHANNO_REWARD_HPP
#define BATCHANNO_REWARD_HPP

#include "errors.hpp"
#include "respparse.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file reward.hpp
 *
 * @brief Rule-based rewards for tagged responses.
 *
 * Both rewards return -1 for a malformed response. For a well-formed one the
 * batch reward is 1 only if every position matches the truth and 0 otherwise;
 * the mixed reward averages the fraction of correct positions with that
 * batch indicator. A wrong label count is a content error, not a format error.
 */

namespace batchanno {

enum class RewardKind { batch, mixed };

inline std::string_view to_string(RewardKind kind) {
    return kind == RewardKind::batch ? "batch" : "mixed";
}

struct RewardOutcome {
    double value = -1;
    bool format_valid = false;
    std::vector<bool> per_cell_correct;
};

/// Position-wise comparison of predictions against truth; positions without a prediction are wrong.
inline std::vector<bool> compare_positions(std::span<const std::string> predicted, std::span<const std::string> truth) {
    std::vector<bool> correct(truth.size(), false);
    for (std::size_t i = 0; i < truth.size() && i < predicted.size(); ++i) {
        correct[i] = predicted[i] == truth[i];
    }
    return correct;
}

namespace detail {

inline RewardOutcome score_positions(std::string_view response, std::span<const std::string> truth) {
    if (truth.empty()) {
        throw ContractViolation("reward requires a non-empty truth list");
    }
    RewardOutcome outcome;
    auto parsed = try_parse_response(response);
    if (!parsed) {
        return outcome;
    }
    outcome.format_valid = true;
    outcome.per_cell_correct = compare_positions(parsed->labels, truth);

    bool all_correct = parsed->labels.size() == truth.size();
    for (bool c : outcome.per_cell_correct) {
        all_correct = all_correct && c;
    }
    outcome.value = all_correct ? 1.0 : 0.0;
    return outcome;
}

} // namespace detail

/// `truth` must be non-empty and canonicalized.
inline RewardOutcome batch_reward(std::string_view response, std::span<const std::string> truth) {
    return detail::score_positions(response, truth);
}

inline RewardOutcome mixed_reward(std::string_view response, std::span<const std::string> truth) {
    auto outcome = detail::score_positions(response, truth);
    if (!outcome.format_valid) {
        return outcome;
    }
    std::size_t hits = 0;
    for (bool c : outcome.per_cell_correct) {
        hits += c ? 1 : 0;
    }
    const double cell_fraction = static_cast<double>(hits) / static_cast<double>(truth.size());
    outcome.value = (cell_fraction + outcome.value) / 2.0;
    return outcome;
}

inline RewardOutcome compute_reward(RewardKind kind, std::string_view response, std::span<const std::string> truth) {
    return kind == RewardKind::batch ? batch_reward(response, truth) : mixed_reward(response, truth);
}

} // namespace batchanno

#endif
