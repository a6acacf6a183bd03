#ifndef BATCHANNO_METRICS_HPP
#define BATCHANNO_METRICS_HPP

#include "corpus.hpp"
#include "errors.hpp"
#include "jsonl.hpp"
#include "respparse.hpp"

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file metrics.hpp
 *
 * @brief Per-instance scores and corpus-level evaluation reports.
 *
 * Only the first N predicted labels of an instance are scored; missing
 * positions count as wrong. Malformed responses stay in the corpus and score
 * zero on accuracy and uniqueness.
 */

namespace batchanno {

struct InstanceScore {
    std::string instance_id;
    std::size_t n_cells = 0;
    double cell_acc = 0;
    bool batch_correct = false;
    bool format_valid = false;
    double uniqueness = 0;
    std::size_t response_length = 0;

    bool operator==(const InstanceScore&) const = default;
};

struct EvalReport {
    std::size_t num_instances = 0;
    double cell_level_acc = 0;
    double batch_level_acc = 0;
    double format_validity = 0;
    double answer_uniqueness = 0;
    double mean_response_length = 0;
    std::vector<InstanceScore> per_instance;

    bool operator==(const EvalReport&) const = default;
};

/// Scores predictions that were already extracted from a well-formed response.
inline InstanceScore score_labels(const std::string& instance_id, std::span<const std::string> predicted,
                                  std::span<const std::string> truth, std::size_t response_length) {
    InstanceScore score;
    score.instance_id = instance_id;
    score.n_cells = truth.size();
    score.format_valid = true;
    score.response_length = response_length;

    const auto scored = std::min(predicted.size(), truth.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scored; ++i) {
        hits += predicted[i] == truth[i] ? 1 : 0;
    }
    std::set<std::string_view> distinct(predicted.begin(), predicted.begin() + static_cast<std::ptrdiff_t>(scored));

    const auto n = static_cast<double>(truth.size());
    score.cell_acc = static_cast<double>(hits) / n;
    score.batch_correct = hits == truth.size();
    score.uniqueness = static_cast<double>(distinct.size()) / n;
    return score;
}

inline InstanceScore invalid_score(const std::string& instance_id, std::size_t n_cells, std::size_t response_length) {
    InstanceScore score;
    score.instance_id = instance_id;
    score.n_cells = n_cells;
    score.response_length = response_length;
    return score;
}

inline InstanceScore score_instance(std::string_view response, const BatchInstance& instance) {
    if (instance.answer.empty()) {
        throw ContractViolation("instance " + instance.instance_id + " has no cells");
    }
    auto parsed = try_parse_response(response);
    if (!parsed) {
        return invalid_score(instance.instance_id, instance.size(), count_tokens(response));
    }
    return score_labels(instance.instance_id, parsed->labels, instance.answer, parsed->raw_length);
}

/// Unweighted means over instances, accumulated in input order.
inline EvalReport aggregate(std::span<const InstanceScore> scores) {
    if (scores.empty()) {
        throw EmptyCorpus();
    }
    double cell = 0, batch = 0, format = 0, unique = 0, length = 0;
    for (const auto& s : scores) {
        cell += s.cell_acc;
        batch += s.batch_correct ? 1.0 : 0.0;
        format += s.format_valid ? 1.0 : 0.0;
        unique += s.uniqueness;
        length += static_cast<double>(s.response_length);
    }

    const auto count = static_cast<double>(scores.size());
    EvalReport report;
    report.num_instances = scores.size();
    report.cell_level_acc = cell / count;
    report.batch_level_acc = batch / count;
    report.format_validity = format / count;
    report.answer_uniqueness = unique / count;
    report.mean_response_length = length / count;
    report.per_instance.assign(scores.begin(), scores.end());
    return report;
}

inline Json score_to_json(const InstanceScore& score) {
    Json object;
    object["instance_id"] = score.instance_id;
    object["n_cells"] = score.n_cells;
    object["cell_acc"] = score.cell_acc;
    object["batch_correct"] = score.batch_correct;
    object["format_valid"] = score.format_valid;
    object["uniqueness"] = score.uniqueness;
    object["response_length"] = score.response_length;
    return object;
}

inline Json report_to_json(const EvalReport& report) {
    Json object;
    object["num_instances"] = report.num_instances;
    object["cell_level_acc"] = report.cell_level_acc;
    object["batch_level_acc"] = report.batch_level_acc;
    object["format_validity"] = report.format_validity;
    object["answer_uniqueness"] = report.answer_uniqueness;
    object["mean_response_length"] = report.mean_response_length;
    Json rows = Json::array();
    for (const auto& score : report.per_instance) {
        rows.push_back(score_to_json(score));
    }
    object["per_instance"] = std::move(rows);
    return object;
}

} // namespace batchanno

#endif
