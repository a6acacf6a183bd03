#ifndef BATCHANNO_TESTS_SUPPORT_HPP
#define BATCHANNO_TESTS_SUPPORT_HPP

#include "batchanno/batchanno.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace support {

using namespace batchanno;

inline BatchInstance make_instance(const std::string& id, std::vector<std::string> labels, std::uint64_t shuffle_seed) {
    BatchInstance b;
    b.instance_id = id;
    b.donor_id = "donor-" + id;
    b.context = "The cell originates from the lung.";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        b.cells.push_back({id + "-c" + std::to_string(i), b.donor_id, labels[i], {"G" + std::to_string(i), "MT" + std::to_string(i)}});
    }
    b.answer = labels;
    b.candidates = labels;
    Engine engine(shuffle_seed);
    shuffle(std::span(b.candidates), engine);
    return b;
}

/// Five N=8 instances whose labels are "type j-i".
inline std::vector<BatchInstance> toy_corpus(std::size_t count = 5, std::size_t n = 8) {
    std::vector<BatchInstance> out;
    for (std::size_t j = 0; j < count; ++j) {
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < n; ++i) {
            labels.push_back("type " + std::to_string(j) + "-" + std::to_string(i));
        }
        out.push_back(make_instance("toy-" + std::to_string(j), labels, j + 100));
    }
    return out;
}

inline const std::vector<std::string>& label_pool() {
    static const std::vector<std::string> pool{
        "b cell", "t cell", "natural killer cell", "monocyte", "mast cell", "neutrophil", "basophil", "eosinophil",
        "platelet", "plasma cell", "fibroblast", "pericyte", "hepatocyte", "enterocyte", "goblet cell",
        "club cell", "ciliated cell", "basal cell", "erythrocyte", "dendritic cell"};
    return pool;
}

/// Random valid instance with N distinct labels drawn from the pool.
inline BatchInstance random_instance(const std::string& id, std::size_t n, Engine& engine) {
    auto labels = label_pool();
    shuffle(std::span(labels), engine);
    labels.resize(n);
    return make_instance(id, labels, engine());
}

inline std::string upper_first(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') {
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
    }
    return s;
}

/// Random response for `truth`: correct, partially wrong, duplicated, wrong length, noisy casing, or malformed.
inline std::string random_response(const std::vector<std::string>& truth, Engine& engine) {
    auto labels = truth;
    const auto kind = uniform_index(engine, 10);
    switch (kind) {
    case 0: break;
    case 1:
        labels[uniform_index(engine, labels.size())] = label_pool()[uniform_index(engine, label_pool().size())];
        break;
    case 2: shuffle(std::span(labels), engine); break;
    case 3: labels.push_back(label_pool()[uniform_index(engine, label_pool().size())]); break;
    case 4: labels.resize(uniform_index(engine, labels.size()) + 1); break;
    case 5:
        for (auto& l : labels) {
            l = uniform_index(engine, 2) ? upper_first(l) : "  " + l + " ";
        }
        break;
    case 6: labels.assign(labels.size(), labels[0]); break;
    default: break;
    }
    std::string response = render_answer("reasoning about markers", labels);
    if (kind == 7) {
        response += " trailing";
    } else if (kind == 8) {
        response = response.substr(response.find("<answer>"));
    } else if (kind == 9) {
        response = "\n  " + response + "\n";
    }
    return response;
}

/// Swaps two positions so the answer is well formed but wrong.
inline std::string wrong_answer(const BatchInstance& instance) {
    auto labels = instance.answer;
    std::swap(labels[0], labels[1]);
    return render_answer("guess", labels);
}

inline std::string right_answer(const BatchInstance& instance) {
    return render_answer("the markers match", instance.answer);
}

/// Mock teacher: each candidate is correct with probability p, independently.
class ScriptedGenerator : public Generator {
public:
    ScriptedGenerator(std::span<const BatchInstance> corpus, double p, std::uint64_t seed) : p_(p), seed_(seed) {
        for (const auto& instance : corpus) {
            by_id_.emplace(instance.instance_id, &instance);
        }
    }

    GenerationResult generate(const GenerationRequest& request) override {
        const auto& instance = *by_id_.at(request.instance_id);
        Engine engine(derive_seed(seed_, request.instance_id + "#" + std::to_string(request.sample_index)));
        const double u = uniform_unit(engine);
        if (u < p_) {
            return {true, right_answer(instance), {}};
        }
        return {true, uniform_index(engine, 2) ? wrong_answer(instance) : "no tags at all", {}};
    }

private:
    double p_;
    std::uint64_t seed_;
    std::map<std::string, const BatchInstance*> by_id_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("batchanno-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace support

#endif
