#ifndef BATCHANNO_DISTILL_HPP
#define BATCHANNO_DISTILL_HPP

#include "corpus.hpp"
#include "errors.hpp"
#include "jsonl.hpp"
#include "promptgen.hpp"
#include "respparse.hpp"
#include "reward.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

/**
 * @file distill.hpp
 *
 * @brief Rejection-sampling distillation from a teacher generator.
 *
 * K candidates are requested per instance with the batch prompt. A candidate
 * is kept only if it is well formed and its answer matches the truth exactly
 * (batch reward 1). The acceptance rate is accepted / total over every
 * candidate, including ones lost to transport failures.
 */

namespace batchanno {

inline constexpr std::size_t default_k_samples = 8;

struct GeneratorEndpoint {
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model_name = "teacher";
    /// Name of the environment variable holding the bearer token.
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 1.0;
    std::size_t max_concurrency = 4;
    std::chrono::milliseconds request_timeout{120000};
    std::size_t max_retries = 2;
};

struct GenerationRequest {
    std::string instance_id;
    std::size_t sample_index = 0;
    std::string prompt;
};

/// Outcome of one call; `ok == false` marks a transient failure worth retrying.
struct GenerationResult {
    bool ok = false;
    std::string text;
    std::string error;
};

/**
 * @brief A text generator behind some transport.
 *
 * `generate()` is called concurrently from several threads. It reports
 * transient failures through `GenerationResult::ok` and throws `AuthError`
 * for rejected credentials.
 */
class Generator {
public:
    virtual ~Generator() = default;

    /// Called once before any sampling; throws `AuthError` when credentials are unusable.
    virtual void authenticate() {}

    virtual GenerationResult generate(const GenerationRequest& request) = 0;
};

struct Candidate {
    std::string text;
    bool transport_failed = false;
    std::string error;
};

enum class RejectionReason { BadFormat, WrongAnswer, TransportError };

inline std::string_view to_string(RejectionReason reason) {
    switch (reason) {
    case RejectionReason::BadFormat: return "BadFormat";
    case RejectionReason::WrongAnswer: return "WrongAnswer";
    case RejectionReason::TransportError: return "TransportError";
    }
    return "Unknown";
}

inline RejectionReason rejection_reason_from_string(std::string_view text) {
    if (text == "BadFormat") return RejectionReason::BadFormat;
    if (text == "WrongAnswer") return RejectionReason::WrongAnswer;
    if (text == "TransportError") return RejectionReason::TransportError;
    throw DataError("unknown rejection reason '" + std::string(text) + "'");
}

struct DistillRecord {
    std::string instance_id;
    std::string prompt;
    std::string response;
    bool accepted = false;
    std::optional<RejectionReason> rejection_reason;

    bool operator==(const DistillRecord&) const = default;
};

struct FilterResult {
    std::vector<DistillRecord> records;
    std::size_t accepted = 0;
    double acceptance_rate = 0;

    std::vector<DistillRecord> accepted_records() const {
        std::vector<DistillRecord> out;
        for (const auto& r : records) {
            if (r.accepted) {
                out.push_back(r);
            }
        }
        return out;
    }
};

namespace detail {

inline Candidate request_with_retries(Generator& generator, const GenerationRequest& request, std::size_t max_retries) {
    Candidate candidate;
    for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
        auto result = generator.generate(request);
        if (result.ok) {
            candidate.text = std::move(result.text);
            candidate.transport_failed = false;
            candidate.error.clear();
            return candidate;
        }
        candidate.transport_failed = true;
        candidate.error = std::move(result.error);
    }
    return candidate;
}

/// Runs `task(i)` for i in [0, count) on at most `workers` threads; the first exception is rethrown.
template<typename Task_>
void parallel_for(std::size_t count, std::size_t workers, Task_&& task) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::mutex failure_lock;

    auto worker = [&]() {
        while (!stop.load()) {
            const auto i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                task(i);
            } catch (...) {
                std::lock_guard lock(failure_lock);
                if (!failure) {
                    failure = std::current_exception();
                }
                stop.store(true);
            }
        }
    };

    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < workers; ++w) {
        threads.emplace_back(worker);
    }
    worker();
    for (auto& t : threads) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace detail

/**
 * Requests `k` independent completions of the batch prompt. Transport
 * failures that persist through `endpoint.max_retries` retries become
 * failed candidates rather than exceptions. At most
 * `endpoint.max_concurrency` requests are in flight at once.
 */
inline std::vector<Candidate> sample_candidates(const BatchInstance& instance, Generator& generator, std::size_t k,
                                                const GeneratorEndpoint& endpoint) {
    if (k == 0) {
        throw UsageError("number of candidates must be at least 1");
    }
    generator.authenticate();
    const auto prompt = render_batch_prompt(instance).text;
    std::vector<Candidate> candidates(k);
    detail::parallel_for(k, endpoint.max_concurrency, [&](std::size_t i) {
        candidates[i] = detail::request_with_retries(generator, {instance.instance_id, i, prompt}, endpoint.max_retries);
    });
    return candidates;
}

/// Keeps candidates that are well formed and exactly correct.
inline FilterResult filter_accept(std::span<const Candidate> candidates, const BatchInstance& instance,
                                  const std::string& prompt) {
    FilterResult result;
    for (const auto& candidate : candidates) {
        DistillRecord record;
        record.instance_id = instance.instance_id;
        record.prompt = prompt;
        record.response = candidate.text;
        if (candidate.transport_failed) {
            record.rejection_reason = RejectionReason::TransportError;
        } else {
            const auto outcome = batch_reward(candidate.text, instance.answer);
            if (!outcome.format_valid) {
                record.rejection_reason = RejectionReason::BadFormat;
            } else if (outcome.value != 1.0) {
                record.rejection_reason = RejectionReason::WrongAnswer;
            } else {
                record.accepted = true;
                ++result.accepted;
            }
        }
        result.records.push_back(std::move(record));
    }
    result.acceptance_rate = candidates.empty()
        ? 0.0
        : static_cast<double>(result.accepted) / static_cast<double>(candidates.size());
    return result;
}

inline Json record_to_json(const DistillRecord& record) {
    Json object;
    object["instance_id"] = record.instance_id;
    object["prompt"] = record.prompt;
    object["response"] = record.response;
    object["accepted"] = record.accepted;
    if (record.rejection_reason) {
        object["rejection_reason"] = to_string(*record.rejection_reason);
    } else {
        object["rejection_reason"] = nullptr;
    }
    return object;
}

inline DistillRecord record_from_json(const Json& object) {
    DistillRecord record;
    record.instance_id = object.at("instance_id").get<std::string>();
    record.prompt = object.at("prompt").get<std::string>();
    record.response = object.at("response").get<std::string>();
    record.accepted = object.at("accepted").get<bool>();
    if (object.contains("rejection_reason") && !object.at("rejection_reason").is_null()) {
        record.rejection_reason = rejection_reason_from_string(object.at("rejection_reason").get<std::string>());
    }
    return record;
}

enum class DedupMode { keep_all, first_per_instance };

/**
 * Writes accepted records as {"instance_id", "prompt", "response"} lines.
 * Throws `ContractViolation` if any record was not accepted.
 */
inline std::size_t write_sft_dataset(std::span<const DistillRecord> records, const std::string& destination,
                                     DedupMode dedup = DedupMode::first_per_instance) {
    std::vector<Json> lines;
    std::set<std::string> seen;
    for (const auto& record : records) {
        if (!record.accepted) {
            throw ContractViolation("record for instance " + record.instance_id + " was not accepted");
        }
        if (dedup == DedupMode::first_per_instance && !seen.insert(record.instance_id).second) {
            continue;
        }
        Json object;
        object["instance_id"] = record.instance_id;
        object["prompt"] = record.prompt;
        object["response"] = record.response;
        lines.push_back(std::move(object));
    }
    write_jsonl(destination, lines);
    return lines.size();
}

struct SftExample {
    std::string instance_id;
    std::string prompt;
    std::string response;
};

inline std::vector<SftExample> read_sft_dataset(const std::string& path) {
    std::vector<SftExample> out;
    for_each_jsonl(path, [&](const Json& object, std::size_t) {
        out.push_back({object.at("instance_id").get<std::string>(), object.at("prompt").get<std::string>(),
                       object.at("response").get<std::string>()});
    });
    return out;
}

/**
 * @brief Append-only record of finished instances.
 *
 * Each line holds one instance id and all of its records, so a restarted run
 * can reuse them without querying the generator again. Instances that hit a
 * transport failure are not journaled and get retried on restart.
 */
class DistillJournal {
public:
    DistillJournal() = default;

    explicit DistillJournal(std::string path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) {
            for_each_jsonl(path_, [&](const Json& object, std::size_t) {
                auto id = object.at("instance_id").get<std::string>();
                std::vector<DistillRecord> records;
                for (const auto& r : object.at("records")) {
                    records.push_back(record_from_json(r));
                }
                finished_[id] = std::move(records);
            });
        }
    }

    bool enabled() const { return !path_.empty(); }

    const std::vector<DistillRecord>* find(const std::string& instance_id) const {
        auto it = finished_.find(instance_id);
        return it == finished_.end() ? nullptr : &it->second;
    }

    void append(const std::string& instance_id, std::span<const DistillRecord> records) {
        if (!enabled()) {
            return;
        }
        Json line;
        line["instance_id"] = instance_id;
        Json rows = Json::array();
        for (const auto& r : records) {
            rows.push_back(record_to_json(r));
        }
        line["records"] = std::move(rows);

        std::lock_guard lock(mutex_);
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        out << line.dump() << '\n';
        out.flush();
        if (!out) {
            throw WriteError(path_);
        }
    }

private:
    std::string path_;
    std::map<std::string, std::vector<DistillRecord>> finished_;
    std::mutex mutex_;
};

struct DistillRun {
    /// All records in corpus order, K per instance.
    std::vector<DistillRecord> records;
    std::size_t accepted = 0;
    std::size_t total = 0;
    std::size_t resumed_instances = 0;

    double acceptance_rate() const {
        return total == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(total);
    }

    std::vector<DistillRecord> accepted_records() const {
        std::vector<DistillRecord> out;
        for (const auto& r : records) {
            if (r.accepted) {
                out.push_back(r);
            }
        }
        return out;
    }
};

/**
 * Distills a whole corpus. Requests for all instances share one pool of
 * `endpoint.max_concurrency` workers. Instances already present in
 * `journal` are not queried again.
 */
inline DistillRun run_distillation(std::span<const BatchInstance> corpus, Generator& generator, std::size_t k,
                                   const GeneratorEndpoint& endpoint, DistillJournal& journal) {
    if (k == 0) {
        throw UsageError("number of candidates must be at least 1");
    }

    std::vector<std::size_t> pending;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
        if (!journal.find(corpus[j].instance_id)) {
            pending.push_back(j);
        }
    }
    if (!pending.empty()) {
        generator.authenticate();
    }

    std::vector<std::string> prompts(corpus.size());
    for (auto j : pending) {
        prompts[j] = render_batch_prompt(corpus[j]).text;
    }

    std::vector<std::vector<Candidate>> candidates(corpus.size());
    std::vector<std::unique_ptr<std::atomic<std::size_t>>> remaining(corpus.size());
    for (auto j : pending) {
        candidates[j].resize(k);
        remaining[j] = std::make_unique<std::atomic<std::size_t>>(k);
    }
    std::vector<FilterResult> filtered(corpus.size());

    detail::parallel_for(pending.size() * k, endpoint.max_concurrency, [&](std::size_t task) {
        const auto j = pending[task / k];
        const auto i = task % k;
        candidates[j][i] = detail::request_with_retries(generator, {corpus[j].instance_id, i, prompts[j]},
                                                        endpoint.max_retries);
        if (remaining[j]->fetch_sub(1) == 1) {
            filtered[j] = filter_accept(candidates[j], corpus[j], prompts[j]);
            const bool clean = std::none_of(candidates[j].begin(), candidates[j].end(),
                                            [](const Candidate& c) { return c.transport_failed; });
            if (clean) {
                journal.append(corpus[j].instance_id, filtered[j].records);
            }
        }
    });

    DistillRun run;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
        const std::vector<DistillRecord>* records = journal.find(corpus[j].instance_id);
        if (records && !remaining[j]) {
            ++run.resumed_instances;
        } else {
            records = &filtered[j].records;
        }
        for (const auto& r : *records) {
            run.accepted += r.accepted ? 1 : 0;
            ++run.total;
            run.records.push_back(r);
        }
    }
    return run;
}

} // namespace batchanno

#endif
