#ifndef BATCHANNO_HTTP_GENERATOR_HPP
#define BATCHANNO_HTTP_GENERATOR_HPP

#include "distill.hpp"
#include "errors.hpp"
#include "jsonl.hpp"

#include "httplib.h"

#include <cstdlib>
#include <string>

/**
 * @file http_generator.hpp
 *
 * @brief Generator backed by an OpenAI-style chat-completions endpoint.
 *
 * Each request is `POST {base_url}/chat/completions` with body
 * `{"model", "messages": [{"role": "user", "content": prompt}], "temperature", "n": 1}`
 * and the bearer token read from the environment variable named in the
 * endpoint. 401/403 responses raise `AuthError`; everything else that is not
 * a 200 counts as a retryable transport failure.
 */

namespace batchanno {

struct ParsedUrl {
    std::string scheme_host_port;
    std::string path_prefix;
};

inline ParsedUrl split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw UsageError("endpoint URL must start with http:// or https://: " + base_url);
    }
    const auto scheme = base_url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw UsageError("unsupported URL scheme '" + scheme + "'");
    }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") {
        throw UsageError("https endpoints need a build with OpenSSL support");
    }
#endif
    const auto path_start = base_url.find('/', scheme_end + 3);
    ParsedUrl parsed;
    parsed.scheme_host_port = base_url.substr(0, path_start);
    if (path_start != std::string::npos) {
        parsed.path_prefix = base_url.substr(path_start);
        while (!parsed.path_prefix.empty() && parsed.path_prefix.back() == '/') {
            parsed.path_prefix.pop_back();
        }
    }
    return parsed;
}

inline Json chat_request_body(const std::string& model, const std::string& prompt, double temperature) {
    Json message;
    message["role"] = "user";
    message["content"] = prompt;
    Json body;
    body["model"] = model;
    body["messages"] = Json::array({message});
    body["temperature"] = temperature;
    body["n"] = 1;
    return body;
}

class HttpChatGenerator : public Generator {
public:
    explicit HttpChatGenerator(GeneratorEndpoint endpoint)
        : endpoint_(std::move(endpoint)), url_(split_base_url(endpoint_.base_url)) {}

    void authenticate() override {
        const char* value = std::getenv(endpoint_.api_key_env.c_str());
        if (value == nullptr || *value == '\0') {
            throw AuthError("environment variable " + endpoint_.api_key_env + " is not set");
        }
        api_key_ = value;
    }

    GenerationResult generate(const GenerationRequest& request) override {
        httplib::Client client(url_.scheme_host_port);
        client.set_connection_timeout(endpoint_.request_timeout);
        client.set_read_timeout(endpoint_.request_timeout);
        client.set_write_timeout(endpoint_.request_timeout);
        if (!api_key_.empty()) {
            client.set_bearer_token_auth(api_key_);
        }

        const auto body = chat_request_body(endpoint_.model_name, request.prompt, endpoint_.temperature).dump();
        auto response = client.Post(url_.path_prefix + "/chat/completions", body, "application/json");
        if (!response) {
            return {false, {}, "request failed: " + httplib::to_string(response.error())};
        }
        if (response->status == 401 || response->status == 403) {
            throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(response->status) + ")");
        }
        if (response->status != 200) {
            return {false, {}, "HTTP " + std::to_string(response->status)};
        }
        try {
            const auto parsed = Json::parse(response->body);
            return {true, parsed.at("choices").at(0).at("message").at("content").get<std::string>(), {}};
        } catch (const nlohmann::json::exception& e) {
            return {false, {}, std::string("malformed completion: ") + e.what()};
        }
    }

private:
    GeneratorEndpoint endpoint_;
    ParsedUrl url_;
    std::string api_key_;
};

} // namespace batchanno

#endif
