// Command-line front end: corpus construction, prompt rendering, scoring,
// distillation, toy GRPO training and endpoint evaluation.
//
// Every option lives on the top-level app so that a flat `key=value` config
// file (--config) can set any of them; explicit flags override file values.

#include "batchanno/batchanno.hpp"
#include "batchanno/http_generator.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace {

using namespace batchanno;

struct Settings {
    std::uint64_t seed = 0;
    std::string out;
    std::string corpus;
    std::string responses;
    std::string expression;
    std::string metadata;
    std::string variant = "batch";
    std::string reward = "batch";

    std::size_t top_genes = default_top_genes;
    std::size_t n_min = BatchBounds{}.n_min;
    std::size_t n_max = BatchBounds{}.n_max;

    GrpoConfig grpo;

    GeneratorEndpoint endpoint;
    std::size_t k_samples = default_k_samples;
    long request_timeout_ms = 120000;
    std::string journal;
    std::string records_out;
    std::string dedup = "first";
    std::string responses_out;
};

std::ostream& out_stream(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") {
        return std::cout;
    }
    file.open(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw WriteError(path);
    }
    return file;
}

void finish(std::ofstream& file, const std::string& path) {
    if (file.is_open()) {
        file.flush();
        if (!file) {
            throw WriteError(path);
        }
    }
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw UsageError(std::string(flag) + " is required");
    }
}

PromptKind prompt_kind(const std::string& variant) {
    if (variant == "batch") return PromptKind::batch_constrained;
    if (variant == "cell") return PromptKind::cell_constrained;
    return PromptKind::open_ended;
}

std::vector<RenderedPrompt> render_all(std::span<const BatchInstance> corpus, PromptKind kind) {
    std::vector<RenderedPrompt> prompts;
    for (const auto& instance : corpus) {
        switch (kind) {
        case PromptKind::batch_constrained: prompts.push_back(render_batch_prompt(instance)); break;
        case PromptKind::open_ended: prompts.push_back(render_open_prompt(instance)); break;
        case PromptKind::cell_constrained:
            for (std::size_t i = 0; i < instance.size(); ++i) {
                prompts.push_back(render_cell_prompt(instance, i));
            }
            break;
        }
    }
    return prompts;
}

struct ResponseRow {
    std::string instance_id;
    std::optional<std::size_t> cell_index;
    std::string response;
};

std::vector<ResponseRow> read_responses(const std::string& path) {
    std::vector<ResponseRow> rows;
    for_each_jsonl(path, [&](const Json& object, std::size_t) {
        ResponseRow row;
        row.instance_id = object.at("instance_id").get<std::string>();
        if (object.contains("cell_index") && !object.at("cell_index").is_null()) {
            row.cell_index = object.at("cell_index").get<std::size_t>();
        }
        row.response = object.at("response").get<std::string>();
        rows.push_back(std::move(row));
    });
    return rows;
}

// Cell-level responses are answered one cell at a time; the first label of
// each is that cell's prediction, and any malformed or missing cell response
// makes the whole instance malformed.
InstanceScore score_cell_responses(const BatchInstance& instance, const std::map<std::size_t, std::string>& by_cell) {
    std::vector<std::string> labels;
    std::size_t length = 0;
    bool valid = by_cell.size() == instance.size();
    for (const auto& [index, response] : by_cell) {
        auto parsed = try_parse_response(response);
        length += count_tokens(response);
        if (!parsed || parsed->labels.empty()) {
            valid = false;
            continue;
        }
        labels.push_back(parsed->labels.front());
    }
    if (!valid) {
        return invalid_score(instance.instance_id, instance.size(), length);
    }
    return score_labels(instance.instance_id, labels, instance.answer, length);
}

EvalReport score_rows(std::span<const BatchInstance> corpus, std::span<const ResponseRow> rows, bool per_cell) {
    std::map<std::string, const BatchInstance*> index;
    for (const auto& instance : corpus) {
        index.emplace(instance.instance_id, &instance);
    }

    std::vector<std::string> unknown;
    std::vector<std::string> order;
    std::map<std::string, std::map<std::size_t, std::string>> cells;
    std::map<std::string, std::string> whole;
    for (const auto& row : rows) {
        auto it = index.find(row.instance_id);
        if (it == index.end()) {
            unknown.push_back(row.instance_id);
            continue;
        }
        if (per_cell) {
            if (!row.cell_index) {
                throw DataError("cell-level response for " + row.instance_id + " has no cell_index");
            }
            if (*row.cell_index >= it->second->size()) {
                throw DataError("cell_index " + std::to_string(*row.cell_index) + " out of range for " + row.instance_id);
            }
            if (!cells.contains(row.instance_id)) {
                order.push_back(row.instance_id);
            }
            if (!cells[row.instance_id].emplace(*row.cell_index, row.response).second) {
                throw DataError("duplicate response for " + row.instance_id + " cell " + std::to_string(*row.cell_index));
            }
        } else {
            if (!whole.emplace(row.instance_id, row.response).second) {
                throw DataError("duplicate response for " + row.instance_id);
            }
            order.push_back(row.instance_id);
        }
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& id : unknown) {
            list += (list.empty() ? "" : ", ") + id;
        }
        throw DataError("responses reference unknown instance ids: " + list);
    }

    std::vector<InstanceScore> scores;
    for (const auto& id : order) {
        const auto& instance = *index.at(id);
        scores.push_back(per_cell ? score_cell_responses(instance, cells.at(id)) : score_instance(whole.at(id), instance));
    }
    return aggregate(scores);
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream file;
    out_stream(path, file) << report_to_json(report).dump(2) << '\n';
    finish(file, path);
}

GeneratorEndpoint endpoint_of(const Settings& s) {
    auto endpoint = s.endpoint;
    endpoint.request_timeout = std::chrono::milliseconds(s.request_timeout_ms);
    if (endpoint.max_concurrency < 1) {
        throw UsageError("max-concurrency must be at least 1");
    }
    return endpoint;
}

int cmd_build_corpus(const Settings& s) {
    require(s.expression, "--expression");
    require(s.out, "--out");
    const auto cells = read_expression(s.expression);
    std::map<std::string, DonorMetadata> metadata;
    if (!s.metadata.empty()) {
        metadata = read_metadata(s.metadata);
    }
    CorpusOptions options;
    options.seed = s.seed;
    options.top_genes = s.top_genes;
    options.bounds = {s.n_min, s.n_max};
    const auto corpus = build_corpus(cells, metadata, options);
    write_corpus(corpus, s.out, options.bounds);

    std::map<std::size_t, std::size_t> sizes;
    std::set<std::string> types;
    for (const auto& instance : corpus) {
        ++sizes[instance.size()];
        types.insert(instance.answer.begin(), instance.answer.end());
    }
    std::cout << "instances: " << corpus.size() << '\n';
    std::cout << "batch sizes:";
    for (const auto& [n, count] : sizes) {
        std::cout << " N=" << n << ":" << count;
    }
    std::cout << '\n' << "distinct cell types: " << types.size() << '\n';
    return 0;
}

int cmd_render(const Settings& s) {
    require(s.corpus, "--corpus");
    const auto corpus = read_corpus(s.corpus);
    std::ofstream file;
    auto& out = out_stream(s.out, file);
    for (const auto& prompt : render_all(corpus, prompt_kind(s.variant))) {
        out << prompt_to_json(prompt).dump() << '\n';
    }
    finish(file, s.out);
    return 0;
}

int cmd_score(const Settings& s) {
    require(s.corpus, "--corpus");
    require(s.responses, "--responses");
    const auto corpus = read_corpus(s.corpus);
    const auto rows = read_responses(s.responses);
    write_report(score_rows(corpus, rows, s.variant == "cell"), s.out);
    return 0;
}

int cmd_distill(const Settings& s) {
    require(s.corpus, "--corpus");
    require(s.out, "--out");
    const auto corpus = read_corpus(s.corpus);
    const auto endpoint = endpoint_of(s);
    HttpChatGenerator generator(endpoint);
    DistillJournal journal(s.journal);
    const auto run = run_distillation(corpus, generator, s.k_samples, endpoint, journal);

    const auto accepted = run.accepted_records();
    const auto written = write_sft_dataset(accepted, s.out,
                                           s.dedup == "all" ? DedupMode::keep_all : DedupMode::first_per_instance);
    if (!s.records_out.empty()) {
        std::vector<Json> lines;
        for (const auto& record : run.records) {
            lines.push_back(record_to_json(record));
        }
        write_jsonl(s.records_out, lines);
    }

    std::size_t transport_failures = 0;
    for (const auto& record : run.records) {
        transport_failures += record.rejection_reason == RejectionReason::TransportError ? 1 : 0;
    }
    std::printf("acceptance rate: %zu/%zu = %.4f\n", run.accepted, run.total, run.acceptance_rate());
    std::printf("sft records written: %zu\n", written);
    if (run.resumed_instances > 0) {
        std::printf("instances resumed from journal: %zu\n", run.resumed_instances);
    }
    if (transport_failures > 0) {
        std::fprintf(stderr, "warning: %zu candidates lost to transport errors\n", transport_failures);
    }
    return 0;
}

int cmd_train_toy(const Settings& s) {
    require(s.corpus, "--corpus");
    require(s.out, "--out");
    const auto corpus = read_corpus(s.corpus);
    for (const auto& instance : corpus) {
        if (instance.size() > 8) {
            std::fprintf(stderr, "note: instance %s has N=%zu; exact expectations are unavailable above 8\n",
                         instance.instance_id.c_str(), instance.size());
            break;
        }
    }
    auto config = s.grpo;
    config.rng_seed = s.seed;
    const auto result = train_toy(corpus, config, s.reward == "mixed" ? RewardKind::mixed : RewardKind::batch);
    write_trace_csv(result.trace, s.out);
    if (!result.trace.empty()) {
        const auto& last = result.trace.back();
        std::printf("steps: %zu\nfinal mean reward: %.6f\nfinal greedy batch accuracy: %.6f\n", last.step,
                    last.mean_reward, last.greedy_batch_acc);
    }
    return 0;
}

int cmd_eval_run(const Settings& s) {
    require(s.corpus, "--corpus");
    const auto corpus = read_corpus(s.corpus);
    const auto endpoint = endpoint_of(s);
    HttpChatGenerator generator(endpoint);
    generator.authenticate();

    const auto prompts = render_all(corpus, prompt_kind(s.variant));
    std::vector<ResponseRow> rows(prompts.size());
    std::atomic<std::size_t> failures{0};
    detail::parallel_for(prompts.size(), endpoint.max_concurrency, [&](std::size_t i) {
        const auto& prompt = prompts[i];
        const auto candidate = detail::request_with_retries(
            generator, {prompt.instance_id, prompt.cell_index.value_or(0), prompt.text}, endpoint.max_retries);
        if (candidate.transport_failed) {
            ++failures;
        }
        rows[i] = {prompt.instance_id, prompt.cell_index, candidate.text};
    });
    if (failures.load() > 0) {
        std::fprintf(stderr, "warning: %zu requests failed after retries and are scored as malformed\n",
                     failures.load());
    }

    if (!s.responses_out.empty()) {
        std::vector<Json> lines;
        for (const auto& row : rows) {
            Json object;
            object["instance_id"] = row.instance_id;
            if (row.cell_index) {
                object["cell_index"] = *row.cell_index;
            }
            object["response"] = row.response;
            lines.push_back(std::move(object));
        }
        write_jsonl(s.responses_out, lines);
    }
    write_report(score_rows(corpus, rows, s.variant == "cell"), s.out);
    return 0;
}

void add_options(CLI::App& app, Settings& s) {
    app.set_config("--config", "", "Flat key=value file; keys are the long option names");

    app.add_option("--seed", s.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--out", s.out, "Output path (stdout when omitted, where allowed)");
    app.add_option("--corpus", s.corpus, "Corpus JSONL");
    app.add_option("--responses", s.responses, "Responses JSONL {instance_id, [cell_index], response}");
    app.add_option("--expression", s.expression, "Expression JSONL");
    app.add_option("--metadata", s.metadata, "Donor metadata JSONL");
    app.add_option("--variant", s.variant, "Prompt variant")
        ->check(CLI::IsMember({"batch", "cell", "open"}))->capture_default_str();
    app.add_option("--reward", s.reward, "Reward used by train-toy")
        ->check(CLI::IsMember({"batch", "mixed"}))->capture_default_str();

    app.add_option("--top-genes", s.top_genes, "Top genes kept per cell")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--n-min", s.n_min, "Smallest batch size")->capture_default_str();
    app.add_option("--n-max", s.n_max, "Largest batch size")->capture_default_str();

    app.add_option("--group-size", s.grpo.group_size, "Rollouts per instance and step")->capture_default_str();
    app.add_option("--clip-epsilon", s.grpo.clip_epsilon, "Ratio clip threshold")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--kl-beta", s.grpo.kl_beta, "KL penalty weight")->check(CLI::NonNegativeNumber)->capture_default_str();
    app.add_option("--learning-rate", s.grpo.learning_rate, "Gradient-ascent step size")->check(CLI::NonNegativeNumber)->capture_default_str();
    app.add_option("--steps", s.grpo.steps, "Training steps")->capture_default_str();
    app.add_option("--std-floor", s.grpo.advantage_std_floor, "Reward std at or below which advantages are zero")->capture_default_str();
    app.add_option("--kl-clamp", s.grpo.kl_clamp, "Cap on per-trajectory KL estimates")->capture_default_str();
    app.add_option("--affinity-truth", s.grpo.affinity_truth, "Warm-start logit of true labels")->capture_default_str();
    app.add_option("--affinity-confuser-gap", s.grpo.affinity_confuser_gap, "Mean warm-start confuser offset")->capture_default_str();
    app.add_option("--affinity-noise", s.grpo.affinity_noise, "Spread of warm-start confuser offsets")->capture_default_str();

    app.add_option("--endpoint-url", s.endpoint.base_url, "Chat-completions base URL")->capture_default_str();
    app.add_option("--model", s.endpoint.model_name, "Model name sent to the endpoint")->capture_default_str();
    app.add_option("--api-key-env", s.endpoint.api_key_env, "Environment variable holding the API key")->capture_default_str();
    app.add_option("--temperature", s.endpoint.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber)->capture_default_str();
    app.add_option("--max-concurrency", s.endpoint.max_concurrency, "Requests in flight at once")->capture_default_str();
    app.add_option("--request-timeout-ms", s.request_timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--max-retries", s.endpoint.max_retries, "Retries after a transport failure")->capture_default_str();
    app.add_option("--k-samples", s.k_samples, "Candidates per instance")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--journal", s.journal, "Distillation journal for resuming");
    app.add_option("--records-out", s.records_out, "All distillation records, accepted or not");
    app.add_option("--dedup", s.dedup, "SFT records kept per instance")
        ->check(CLI::IsMember({"first", "all"}))->capture_default_str();
    app.add_option("--responses-out", s.responses_out, "Raw responses collected by eval-run");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch cell-type annotation toolkit"};
    app.set_version_flag("--version", std::string(batchanno::version));
    app.require_subcommand(1);

    Settings settings;
    add_options(app, settings);

    const std::vector<std::pair<std::string, std::string>> commands{
        {"build-corpus", "Build batch instances from expression and metadata files"},
        {"render", "Render prompts for every instance"},
        {"score", "Score a responses file against a corpus"},
        {"distill", "Rejection-sample SFT data from a chat-completions endpoint"},
        {"train-toy", "Run GRPO on the tabular toy policy and write the trace"},
        {"eval-run", "Query an endpoint once per prompt and score the answers"},
    };
    for (const auto& [name, description] : commands) {
        app.add_subcommand(name, description)->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const auto* command = app.get_subcommands().front();
    const auto config_text = app.config_to_str(true, false);
    std::fprintf(stderr, "batchanno %s | command=%s | seed=%llu | config=%016llx\n", batchanno::version,
                 command->get_name().c_str(), static_cast<unsigned long long>(settings.seed),
                 static_cast<unsigned long long>(batchanno::fnv1a(config_text)));

    try {
        const auto& name = command->get_name();
        if (name == "build-corpus") return cmd_build_corpus(settings);
        if (name == "render") return cmd_render(settings);
        if (name == "score") return cmd_score(settings);
        if (name == "distill") return cmd_distill(settings);
        if (name == "train-toy") return cmd_train_toy(settings);
        return cmd_eval_run(settings);
    } catch (const batchanno::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const batchanno::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const batchanno::TransportError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
