#ifndef BATCHANNO_CORPUS_HPP
#define BATCHANNO_CORPUS_HPP

#include "context.hpp"
#include "errors.hpp"
#include "labels.hpp"
#include "random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

/**
 * @file corpus.hpp
 *
 * @brief Construction of batch annotation instances from per-cell expression
 * profiles and donor metadata.
 *
 * An instance groups N cells of one donor, each of a different cell type,
 * together with the donor context and a shuffled list of the N true labels.
 */

namespace batchanno {

/// Default number of top-ranked genes kept per cell.
inline constexpr std::size_t default_top_genes = 50;

struct GeneExpression {
    std::string gene_symbol;
    double count = 0;
};

/// Size limits on the number of cells per instance.
struct BatchBounds {
    std::size_t n_min = 8;
    std::size_t n_max = 15;
};

struct CellRecord {
    std::string cell_id;
    std::string donor_id;
    std::string cell_type;
    std::vector<std::string> top_genes;

    bool operator==(const CellRecord&) const = default;
};

/// One raw cell as read from an expression file.
struct CellSource {
    std::string cell_id;
    std::string donor_id;
    std::string cell_type;
    std::vector<GeneExpression> profile;
};

struct BatchInstance {
    std::string instance_id;
    std::string donor_id;
    std::string context;
    std::vector<CellRecord> cells;
    std::vector<std::string> candidates;
    std::vector<std::string> answer;

    std::size_t size() const { return cells.size(); }

    bool operator==(const BatchInstance&) const = default;
};

/// Symbols must be non-empty and whitespace-free (which also excludes the label separator).
inline bool valid_gene_symbol(std::string_view symbol) {
    if (symbol.empty()) {
        return false;
    }
    return std::none_of(symbol.begin(), symbol.end(), is_space);
}

/**
 * Returns the `m` most expressed gene symbols of `profile` in descending
 * order of count. Equal counts are ordered by ascending symbol, so the output
 * is fully determined by the profile and increasing `m` only ever extends it.
 */
inline std::vector<std::string> rank_top_genes(std::span<const GeneExpression> profile, std::size_t m) {
    if (profile.empty()) {
        throw EmptyProfile();
    }
    if (m == 0) {
        throw UsageError("number of top genes must be at least 1");
    }

    std::vector<const GeneExpression*> order;
    order.reserve(profile.size());
    std::unordered_set<std::string_view> seen;
    for (const auto& entry : profile) {
        if (!valid_gene_symbol(entry.gene_symbol)) {
            throw DataError("invalid gene symbol '" + entry.gene_symbol + "'");
        }
        if (!std::isfinite(entry.count) || entry.count < 0) {
            throw DataError("invalid expression count for gene " + entry.gene_symbol);
        }
        if (!seen.insert(entry.gene_symbol).second) {
            throw DataError("duplicate gene symbol " + entry.gene_symbol);
        }
        order.push_back(&entry);
    }

    const auto keep = std::min(m, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
        [](const GeneExpression* left, const GeneExpression* right) {
            if (left->count != right->count) {
                return left->count > right->count;
            }
            return left->gene_symbol < right->gene_symbol;
        });

    std::vector<std::string> output;
    output.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        output.push_back(order[i]->gene_symbol);
    }
    return output;
}

/**
 * Picks one representative cell per (canonical) cell type from the cells of
 * a single donor. The pick is uniform over that type's cells and depends only
 * on `rng_seed`, the donor and the type, so adding cells of other types does
 * not change earlier picks.
 *
 * Only the chosen cells are ranked; their records carry `top_genes` genes.
 */
inline std::map<std::string, CellRecord> select_representatives(
    std::span<const CellSource> cells_of_donor,
    std::uint64_t rng_seed,
    std::size_t top_genes = default_top_genes)
{
    std::map<std::string, std::vector<const CellSource*>> by_type;
    for (const auto& cell : cells_of_donor) {
        auto label = canonicalize_label(cell.cell_type);
        if (label.empty()) {
            throw DataError("cell " + cell.cell_id + " has an empty cell type");
        }
        by_type[std::move(label)].push_back(&cell);
    }

    std::map<std::string, CellRecord> output;
    for (const auto& [label, members] : by_type) {
        const auto& donor = members.front()->donor_id;
        Engine engine(derive_seed(rng_seed, donor + '\x1f' + label));
        const auto* chosen = members[uniform_index(engine, members.size())];
        output.emplace(label, CellRecord{
            chosen->cell_id,
            chosen->donor_id,
            label,
            rank_top_genes(chosen->profile, top_genes),
        });
    }
    return output;
}

/**
 * Checks every structural invariant of an instance and throws
 * `RejectedInstance` naming the first violation.
 */
inline void validate_instance(const BatchInstance& instance, const BatchBounds& bounds = {}) {
    auto reject = [&](const std::string& why) {
        throw RejectedInstance("instance '" + instance.instance_id + "': " + why);
    };

    const auto n = instance.cells.size();
    if (n < bounds.n_min || n > bounds.n_max) {
        reject("has " + std::to_string(n) + " cells, outside [" + std::to_string(bounds.n_min) + ", " +
               std::to_string(bounds.n_max) + "]");
    }
    if (instance.answer.size() != n || instance.candidates.size() != n) {
        reject("cells, answer and candidates differ in length");
    }

    std::set<std::string_view> types;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& cell = instance.cells[i];
        if (cell.donor_id != instance.donor_id) {
            reject("cell " + cell.cell_id + " belongs to another donor");
        }
        if (cell.cell_type != instance.answer[i]) {
            reject("answer does not match the type of cell " + cell.cell_id);
        }
        if (cell.cell_type.empty() || cell.cell_type != canonicalize_label(cell.cell_type)) {
            reject("label '" + cell.cell_type + "' is not canonical");
        }
        if (cell.cell_type.find(label_separator) != std::string::npos) {
            reject("label '" + cell.cell_type + "' contains the label separator");
        }
        if (!types.insert(cell.cell_type).second) {
            reject("cell type '" + cell.cell_type + "' appears twice");
        }

        std::set<std::string_view> genes;
        for (const auto& gene : cell.top_genes) {
            if (!valid_gene_symbol(gene)) {
                reject("invalid gene symbol '" + gene + "'");
            }
            if (!genes.insert(gene).second) {
                reject("gene " + gene + " repeated in cell " + cell.cell_id);
            }
        }
    }

    auto sorted_candidates = instance.candidates;
    auto sorted_answer = instance.answer;
    std::sort(sorted_candidates.begin(), sorted_candidates.end());
    std::sort(sorted_answer.begin(), sorted_answer.end());
    if (sorted_candidates != sorted_answer) {
        reject("candidates are not a permutation of the answer");
    }
}

/**
 * Groups per-donor representatives into instances.
 *
 * A donor with T types yields nothing when T < n_min and a single instance
 * when T <= n_max. Larger donors have their types shuffled and cut into
 * chunks of n_max; a trailing chunk is kept only if it still has at least
 * n_min types. Candidates are a seeded shuffle of each instance's answer.
 *
 * Donors without a metadata entry get an empty context. Output order follows
 * donor id, then chunk index.
 */
inline std::vector<BatchInstance> build_batches(
    const std::map<std::string, std::map<std::string, CellRecord>>& donor_cells,
    const std::map<std::string, DonorMetadata>& metadata,
    const BatchBounds& bounds,
    std::uint64_t rng_seed)
{
    if (bounds.n_min < 1 || bounds.n_min > bounds.n_max) {
        throw InvalidRange("batch size range [" + std::to_string(bounds.n_min) + ", " +
                           std::to_string(bounds.n_max) + "] is empty");
    }

    std::vector<BatchInstance> output;
    for (const auto& [donor_id, representatives] : donor_cells) {
        if (representatives.size() < bounds.n_min) {
            continue;
        }

        std::vector<const CellRecord*> pool;
        pool.reserve(representatives.size());
        for (const auto& entry : representatives) {
            pool.push_back(&entry.second);
        }
        Engine partition_engine(derive_seed(rng_seed, "partition\x1f" + donor_id));
        shuffle(std::span(pool), partition_engine);

        std::string context;
        if (auto found = metadata.find(donor_id); found != metadata.end()) {
            context = render_context(found->second);
        }

        std::size_t chunk = 0;
        for (std::size_t start = 0; start < pool.size(); start += bounds.n_max, ++chunk) {
            const auto stop = std::min(pool.size(), start + bounds.n_max);
            if (stop - start < bounds.n_min) {
                break;
            }

            BatchInstance instance;
            instance.instance_id = donor_id + "-" + std::to_string(chunk);
            instance.donor_id = donor_id;
            instance.context = context;
            for (std::size_t i = start; i < stop; ++i) {
                instance.cells.push_back(*pool[i]);
                instance.answer.push_back(pool[i]->cell_type);
            }
            instance.candidates = instance.answer;
            Engine candidate_engine(derive_seed(rng_seed, "candidates\x1f" + instance.instance_id));
            shuffle(std::span(instance.candidates), candidate_engine);

            validate_instance(instance, bounds);
            output.push_back(std::move(instance));
        }
    }
    return output;
}

struct CorpusOptions {
    std::uint64_t seed = 0;
    std::size_t top_genes = default_top_genes;
    BatchBounds bounds;
};

/// Full construction: group cells by donor, pick representatives, then batch.
inline std::vector<BatchInstance> build_corpus(
    std::span<const CellSource> cells,
    const std::map<std::string, DonorMetadata>& metadata,
    const CorpusOptions& options)
{
    if (options.bounds.n_min < 1 || options.bounds.n_min > options.bounds.n_max) {
        throw InvalidRange("batch size range [" + std::to_string(options.bounds.n_min) + ", " +
                           std::to_string(options.bounds.n_max) + "] is empty");
    }

    std::map<std::string, std::vector<CellSource>> by_donor;
    for (const auto& cell : cells) {
        by_donor[cell.donor_id].push_back(cell);
    }

    std::map<std::string, std::map<std::string, CellRecord>> representatives;
    for (const auto& [donor_id, members] : by_donor) {
        representatives.emplace(donor_id, select_representatives(members, options.seed, options.top_genes));
    }
    return build_batches(representatives, metadata, options.bounds, options.seed);
}

} // namespace batchanno

#endif
