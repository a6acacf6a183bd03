#ifndef BATCHANNO_CORPUS_IO_HPP
#define BATCHANNO_CORPUS_IO_HPP

#include "corpus.hpp"
#include "jsonl.hpp"

#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

/**
 * @file corpus_io.hpp
 *
 * @brief JSONL readers and writers for expression inputs, donor metadata and
 * built corpora.
 *
 * Expression input, one cell per line:
 *
 *     {"cell_id": "c1", "donor_id": "d1", "cell_type": "B cell", "expression": {"MS4A1": 12.0, ...}}
 *
 * Metadata input, one donor per line (attribute order is preserved):
 *
 *     {"donor_id": "d1", "attributes": {"sex": "male", "tissue": "ileum"}}
 *
 * Corpus output, one instance per line:
 *
 *     {"instance_id": ..., "donor_id": ..., "context": ..., "cells": [{"cell_id": ..., "genes": [...]}],
 *      "candidates": [...], "answer": [...]}
 */

namespace batchanno {

inline Json instance_to_json(const BatchInstance& instance) {
    Json cells = Json::array();
    for (const auto& cell : instance.cells) {
        Json entry;
        entry["cell_id"] = cell.cell_id;
        entry["genes"] = cell.top_genes;
        cells.push_back(std::move(entry));
    }

    Json object;
    object["instance_id"] = instance.instance_id;
    object["donor_id"] = instance.donor_id;
    object["context"] = instance.context;
    object["cells"] = std::move(cells);
    object["candidates"] = instance.candidates;
    object["answer"] = instance.answer;
    return object;
}

/// Inverse of `instance_to_json`; cell donors and types are restored from the instance.
inline BatchInstance instance_from_json(const Json& object) {
    BatchInstance instance;
    instance.instance_id = object.at("instance_id").get<std::string>();
    instance.donor_id = object.at("donor_id").get<std::string>();
    instance.context = object.at("context").get<std::string>();
    instance.candidates = object.at("candidates").get<std::vector<std::string>>();
    instance.answer = object.at("answer").get<std::vector<std::string>>();

    const auto& cells = object.at("cells");
    if (cells.size() != instance.answer.size()) {
        throw DataError("instance " + instance.instance_id + ": cells and answer differ in length");
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        instance.cells.push_back(CellRecord{
            cells[i].at("cell_id").get<std::string>(),
            instance.donor_id,
            instance.answer[i],
            cells[i].at("genes").get<std::vector<std::string>>(),
        });
    }
    return instance;
}

/**
 * Writes instances as JSONL and returns the number of lines written.
 * Every instance is validated against `bounds` before the file is touched.
 */
inline std::size_t write_corpus(std::span<const BatchInstance> instances, const std::string& destination,
                                const BatchBounds& bounds = {}) {
    std::vector<Json> lines;
    lines.reserve(instances.size());
    for (const auto& instance : instances) {
        validate_instance(instance, bounds);
        lines.push_back(instance_to_json(instance));
    }
    write_jsonl(destination, lines);
    return lines.size();
}

/// Reads a corpus file; instances are structurally validated with no size bounds.
inline std::vector<BatchInstance> read_corpus(const std::string& path) {
    std::vector<BatchInstance> output;
    const BatchBounds any_size{1, std::numeric_limits<std::size_t>::max()};
    for_each_jsonl(path, [&](const Json& object, std::size_t) {
        auto instance = instance_from_json(object);
        validate_instance(instance, any_size);
        output.push_back(std::move(instance));
    });
    return output;
}

inline std::vector<CellSource> read_expression(const std::string& path) {
    std::vector<CellSource> output;
    for_each_jsonl(path, [&](const Json& object, std::size_t line) {
        CellSource cell;
        cell.cell_id = object.at("cell_id").get<std::string>();
        cell.donor_id = object.at("donor_id").get<std::string>();
        cell.cell_type = object.at("cell_type").get<std::string>();
        const auto& expression = object.at("expression");
        if (!expression.is_object()) {
            throw DataError(path + ":" + std::to_string(line) + ": expression must be an object");
        }
        for (const auto& [gene, count] : expression.items()) {
            cell.profile.push_back(GeneExpression{gene, count.get<double>()});
        }
        output.push_back(std::move(cell));
    });
    return output;
}

inline std::map<std::string, DonorMetadata> read_metadata(const std::string& path) {
    std::map<std::string, DonorMetadata> output;
    for_each_jsonl(path, [&](const Json& object, std::size_t line) {
        DonorMetadata meta;
        meta.donor_id = object.at("donor_id").get<std::string>();
        if (object.contains("attributes")) {
            for (const auto& [key, value] : object.at("attributes").items()) {
                meta.attributes.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
            }
        }
        if (output.contains(meta.donor_id)) {
            throw DataError(path + ":" + std::to_string(line) + ": duplicate donor " + meta.donor_id);
        }
        output.emplace(meta.donor_id, std::move(meta));
    });
    return output;
}

} // namespace batchanno

#endif
