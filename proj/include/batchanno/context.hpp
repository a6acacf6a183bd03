#ifndef BATCHANNO_CONTEXT_HPP
#define BATCHANNO_CONTEXT_HPP

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

/**
 * @file context.hpp
 *
 * @brief Donor metadata and its natural-language rendering.
 */

namespace batchanno {

/**
 * @brief Donor-level metadata as an ordered list of key/value attributes.
 *
 * Keys outside the recognized set are kept (so metadata files round-trip)
 * but contribute nothing to the rendered context.
 */
struct DonorMetadata {
    std::string donor_id;
    std::vector<std::pair<std::string, std::string>> attributes;

    /// First value stored under `key`, if any.
    std::optional<std::string_view> find(std::string_view key) const {
        for (const auto& [k, v] : attributes) {
            if (k == key) {
                return std::string_view(v);
            }
        }
        return std::nullopt;
    }

    bool operator==(const DonorMetadata&) const = default;
};

namespace detail {

struct ValueSentence {
    std::string_view value;
    std::string_view sentence;
};

inline std::optional<std::string> lookup(std::string_view value, std::initializer_list<ValueSentence> table) {
    for (const auto& entry : table) {
        if (entry.value == value) {
            return std::string(entry.sentence);
        }
    }
    return std::nullopt;
}

inline std::string fill(std::string_view prefix, std::string_view value, std::string_view suffix) {
    std::string out(prefix);
    out += value;
    out += suffix;
    return out;
}

inline std::optional<std::string> render_attribute(std::string_view key, std::string_view value) {
    if (key == "sex") {
        return fill("The cell is from a ", value, " individual.");
    }
    if (key == "development_stage") {
        return fill("The individual is at the ", value, ".");
    }
    if (key == "ethnicity") {
        return fill("The donor has a ", value, " background.");
    }
    if (key == "tissue") {
        return fill("The cell originates from the ", value, ".");
    }
    if (key == "disease") {
        if (value == "normal") {
            return std::string("The patient is healthy with no diagnosed disease.");
        }
        return fill("The patient has been diagnosed with ", value, ".");
    }
    if (key == "smoking_status") {
        return lookup(value, {
            {"active", "The patient is an active smoker."},
            {"former", "The patient is a former smoker."},
            {"hist of marijuana use", "The patient has a history of marijuana use."},
            {"never", "The patient has never smoked."},
        });
    }
    if (key == "tumor_stage") {
        return lookup(value, {
            {"non-cancer", "There is no cancer present."},
            {"early", "The patient has an early-stage tumor."},
            {"advanced", "The patient has an advanced-stage tumor."},
        });
    }
    if (key == "sample_type") {
        return lookup(value, {
            {"M3", "The sample was collected at month 3 post-treatment."},
            {"M6", "The sample was collected at month 6 post-treatment."},
            {"UV", "The sample was exposed to ultraviolet (UV) treatment."},
            {"CONTROL", "The sample is from the control group."},
        });
    }
    if (key == "hemisphere") {
        return lookup(value, {
            {"left", "The tissue sample was taken from the left hemisphere of the brain."},
            {"right", "The tissue sample was taken from the right hemisphere of the brain."},
        });
    }
    if (key == "tumor_site") {
        return lookup(value, {
            {"primary", "The tumor is located at the primary site."},
            {"metastasis", "The tumor has metastasized to other parts of the body."},
            {"normal", "This sample was collected from non-tumorous tissue."},
        });
    }
    if (key == "sample_source") {
        return lookup(value, {
            {"tumor", "The sample is derived from tumor tissue."},
            {"normal", "The sample is derived from normal tissue."},
            {"blood", "The sample is a blood-derived specimen."},
            {"lymphnode", "The sample is derived from lymph node tissue."},
        });
    }
    if (key == "cd45") {
        return lookup(value, {
            {"yes", "The cell is CD45-positive, suggesting an immune cell origin."},
            {"no", "The cell is CD45-negative, suggesting a non-immune cell lineage."},
            {"mixed", "The sample contains a mixture of CD45-positive and CD45-negative cells."},
        });
    }
    if (key == "diabetes") {
        return lookup(value, {
            {"yes", "The patient has a history of diabetes."},
            {"no", "The patient does not have diabetes."},
        });
    }
    if (key == "hypertension") {
        return lookup(value, {
            {"yes", "The patient has a history of hypertension."},
            {"no", "The patient does not have hypertension."},
        });
    }
    if (key == "activation") {
        return lookup(value, {
            {"activated", "The sample was stimulated and represents activated immune cells."},
            {"resting", "The sample represents resting (non-activated) immune cells."},
        });
    }
    if (key == "genotype") {
        return lookup(value, {
            {"FLT3-ITD,NPM1-MUT", "The patient carries FLT3-ITD and NPM1 mutations."},
            {"FLT3-WT,NPM1-MUT", "The patient carries a wild-type FLT3 and an NPM1 mutation."},
            {"APL", "The patient is diagnosed with acute promyelocytic leukemia (APL)."},
        });
    }
    if (key == "conditions") {
        auto known = lookup(value, {
            {"epilepsy", "The patient has a history of epilepsy."},
            {"tumor", "The patient has a diagnosed brain tumor."},
            {"hydrocephalus", "The patient has hydrocephalus (fluid buildup in the brain)."},
            {"both", "The patient has both epilepsy and a brain tumor."},
            {"other", "The patient has other neurological conditions."},
            {"healthy", "The donor was healthy with no reported skin condition."},
            {"dm \xE2\x80\x93 non ulcer", "The donor had diabetes mellitus without skin ulceration."},
            {"dm - non ulcer", "The donor had diabetes mellitus without skin ulceration."},
            {"keloid", "The donor had a keloid, which is an overgrowth of scar tissue."},
            {"localised scleroderma", "The donor was diagnosed with localized scleroderma."},
            {"scar", "The donor had a typical scar from prior skin injury."},
        });
        if (known) {
            return known;
        }
        // Anything else is a free-text lung condition.
        return fill("The lung condition is described as ", value, ".");
    }
    if (key == "egfr") {
        return fill("The patient's estimated glomerular filtration rate (eGFR) is in the range ", value, ".");
    }
    return std::nullopt;
}

} // namespace detail

/// Attribute keys that render, in rendering order.
inline constexpr std::array<std::string_view, 18> context_attribute_order{
    "sex", "development_stage", "ethnicity", "tissue", "disease", "smoking_status",
    "tumor_stage", "sample_type", "hemisphere", "tumor_site", "sample_source", "cd45",
    "diabetes", "hypertension", "activation", "genotype", "conditions", "egfr",
};

/**
 * Renders donor metadata as a context paragraph, one sentence per present
 * attribute in `context_attribute_order`, joined by single spaces.
 *
 * Categorical attributes whose value has no template are skipped, as are
 * empty values and unrecognized keys. `self_reported_ethnicity` is accepted
 * as an alias of `ethnicity`.
 */
inline std::string render_context(const DonorMetadata& meta) {
    std::string out;
    for (auto key : context_attribute_order) {
        auto value = meta.find(key);
        if (!value && key == "ethnicity") {
            value = meta.find("self_reported_ethnicity");
        }
        if (!value || value->empty()) {
            continue;
        }
        if (auto sentence = detail::render_attribute(key, *value)) {
            if (!out.empty()) {
                out += ' ';
            }
            out += *sentence;
        }
    }
    return out;
}

} // namespace batchanno

#endif
