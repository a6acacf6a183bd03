#ifndef BATCHANNO_JSONL_HPP
#define BATCHANNO_JSONL_HPP

#include "errors.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace batchanno {

using Json = nlohmann::ordered_json;

/// Calls `handle(object, line_number)` for every non-blank line of a JSONL file.
template<typename Handler_>
void for_each_jsonl(const std::string& path, Handler_&& handle) {
    if (!std::filesystem::exists(path)) {
        throw InputNotFound(path);
    }
    std::ifstream input(path, std::ios::binary);
    if (!input) {
        throw DataError("cannot open " + path);
    }

    std::string line;
    std::size_t line_number = 0;
    while (std::getline(input, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        Json object;
        try {
            object = Json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_number) + ": " + e.what());
        }
        try {
            handle(object, line_number);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_number) + ": " + e.what());
        }
    }
}

/// Writes one compact JSON document per line, "\n"-terminated.
inline void write_jsonl(const std::string& path, const std::vector<Json>& objects) {
    std::ofstream output(path, std::ios::binary | std::ios::trunc);
    if (!output) {
        throw WriteError(path);
    }
    for (const auto& object : objects) {
        output << object.dump() << '\n';
    }
    output.flush();
    if (!output) {
        throw WriteError(path);
    }
}

} // namespace batchanno

#endif
