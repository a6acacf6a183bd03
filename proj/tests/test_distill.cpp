#include "mock_server.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include "batchanno/http_generator.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace batchanno;

namespace {

class FixedGenerator : public Generator {
public:
    explicit FixedGenerator(std::string text) : text_(std::move(text)) {}
    GenerationResult generate(const GenerationRequest&) override { return {true, text_, {}}; }

private:
    std::string text_;
};

class FailingGenerator : public Generator {
public:
    GenerationResult generate(const GenerationRequest&) override {
        ++calls;
        return {false, {}, "timed out"};
    }
    std::atomic<int> calls{0};
};

class RejectingGenerator : public Generator {
public:
    void authenticate() override { throw AuthError("no key"); }
    GenerationResult generate(const GenerationRequest&) override {
        ++calls;
        return {true, "", {}};
    }
    std::atomic<int> calls{0};
};

// Sleeps inside generate() and records the peak number of overlapping calls.
class CountingGenerator : public Generator {
public:
    explicit CountingGenerator(const BatchInstance& instance) : answer_(support::right_answer(instance)) {}

    GenerationResult generate(const GenerationRequest&) override {
        const int now = ++in_flight_;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(3));
        --in_flight_;
        return {true, answer_, {}};
    }

    std::atomic<int> peak{0};

private:
    std::string answer_;
    std::atomic<int> in_flight_{0};
};

class ScopedEnv {
public:
    ScopedEnv(const char* name, const char* value) : name_(name) {
        if (value) {
            ::setenv(name, value, 1);
        } else {
            ::unsetenv(name);
        }
    }
    ~ScopedEnv() { ::unsetenv(name_); }

private:
    const char* name_;
};

BatchInstance instance8() {
    Engine engine(31);
    return support::random_instance("d8", 8, engine);
}

} // namespace

TEST(SampleCandidates, FixedTextK8) {
    FixedGenerator gen("same");
    const auto c = sample_candidates(instance8(), gen, 8, {});
    ASSERT_EQ(c.size(), 8u);
    for (const auto& x : c) {
        EXPECT_EQ(x.text, "same");
        EXPECT_FALSE(x.transport_failed);
    }
    EXPECT_EQ(sample_candidates(instance8(), gen, 1, {}).size(), 1u);
}

TEST(SampleCandidates, TimeoutsBecomeSentinels) {
    FailingGenerator gen;
    GeneratorEndpoint endpoint;
    endpoint.max_retries = 2;
    const auto c = sample_candidates(instance8(), gen, 8, endpoint);
    ASSERT_EQ(c.size(), 8u);
    for (const auto& x : c) {
        EXPECT_TRUE(x.transport_failed);
    }
    EXPECT_EQ(gen.calls.load(), 24);
    const auto f = filter_accept(c, instance8(), "p");
    for (const auto& r : f.records) {
        EXPECT_EQ(r.rejection_reason, RejectionReason::TransportError);
    }
}

TEST(SampleCandidates, AuthFailsBeforeSampling) {
    RejectingGenerator gen;
    EXPECT_THROW(sample_candidates(instance8(), gen, 8, {}), AuthError);
    EXPECT_EQ(gen.calls.load(), 0);
}

TEST(SampleCandidates, ConcurrencyIsBounded) {
    const auto instance = instance8();
    CountingGenerator gen(instance);
    GeneratorEndpoint endpoint;
    endpoint.max_concurrency = 3;
    sample_candidates(instance, gen, 24, endpoint);
    EXPECT_LE(gen.peak.load(), 3);
    EXPECT_GE(gen.peak.load(), 2);

    CountingGenerator corpus_gen(instance);
    std::vector<BatchInstance> corpus(6, instance);
    for (std::size_t j = 0; j < corpus.size(); ++j) {
        corpus[j].instance_id = "c" + std::to_string(j);
    }
    DistillJournal journal;
    run_distillation(corpus, corpus_gen, 8, endpoint, journal);
    EXPECT_LE(corpus_gen.peak.load(), 3);
}

TEST(FilterAccept, Counting) {
    const auto b = instance8();
    std::vector<Candidate> c;
    for (int i = 0; i < 8; ++i) {
        c.push_back({i < 3 ? support::right_answer(b) : support::wrong_answer(b), false, {}});
    }
    const auto f = filter_accept(c, b, "p");
    EXPECT_EQ(f.accepted, 3u);
    EXPECT_EQ(f.acceptance_rate, 0.375);
    EXPECT_EQ(f.records[5].rejection_reason, RejectionReason::WrongAnswer);
    EXPECT_FALSE(f.records[0].rejection_reason);
}

TEST(FilterAccept, AllBadFormat) {
    const auto b = instance8();
    std::vector<Candidate> c(4, Candidate{"just text", false, {}});
    const auto f = filter_accept(c, b, "p");
    EXPECT_EQ(f.acceptance_rate, 0.0);
    for (const auto& r : f.records) {
        EXPECT_EQ(r.rejection_reason, RejectionReason::BadFormat);
    }
}

TEST(SftDataset, DedupModes) {
    const auto dir = support::temp_dir("sft");
    std::vector<DistillRecord> records{{"a", "p", "r1", true, {}}, {"a", "p", "r2", true, {}}, {"b", "p", "r3", true, {}}};
    EXPECT_EQ(write_sft_dataset(records, (dir / "first.jsonl").string(), DedupMode::first_per_instance), 2u);
    EXPECT_EQ(write_sft_dataset(records, (dir / "all.jsonl").string(), DedupMode::keep_all), 3u);
    EXPECT_EQ(write_sft_dataset({}, (dir / "none.jsonl").string()), 0u);
    const auto back = read_sft_dataset((dir / "first.jsonl").string());
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].response, "r1");
    EXPECT_EQ(support::read_file(dir / "none.jsonl"), "");
}

TEST(SftDataset, RejectsUnacceptedRecords) {
    const auto dir = support::temp_dir("sft-bad");
    std::vector<DistillRecord> records{{"a", "p", "r", false, RejectionReason::WrongAnswer}};
    EXPECT_THROW(write_sft_dataset(records, (dir / "x.jsonl").string()), ContractViolation);
}

TEST(RunDistillation, JournalResumesWithoutRequery) {
    const auto dir = support::temp_dir("journal");
    Engine engine(5);
    std::vector<BatchInstance> corpus;
    for (int j = 0; j < 5; ++j) {
        corpus.push_back(support::random_instance("j" + std::to_string(j), 8, engine));
    }
    const auto path = (dir / "journal.jsonl").string();
    support::ScriptedGenerator gen(corpus, 0.5, 3);
    GeneratorEndpoint endpoint;
    DistillRun first;
    {
        DistillJournal journal(path);
        first = run_distillation(corpus, gen, 8, endpoint, journal);
    }
    EXPECT_EQ(first.total, 40u);

    RejectingGenerator never_called;
    DistillJournal journal(path);
    const auto second = run_distillation(corpus, never_called, 8, endpoint, journal);
    EXPECT_EQ(never_called.calls.load(), 0);
    EXPECT_EQ(second.resumed_instances, 5u);
    EXPECT_EQ(second.records, first.records);
}

TEST(RunDistillation, AcceptedRecordsRescoreToOne) {
    Engine engine(6);
    std::vector<BatchInstance> corpus;
    for (int j = 0; j < 20; ++j) {
        corpus.push_back(support::random_instance("k" + std::to_string(j), 8 + uniform_index(engine, 8), engine));
    }
    support::ScriptedGenerator gen(corpus, 0.4, 9);
    DistillJournal journal;
    const auto run = run_distillation(corpus, gen, 8, {}, journal);
    std::map<std::string, const BatchInstance*> by_id;
    for (const auto& b : corpus) {
        by_id[b.instance_id] = &b;
    }
    for (const auto& r : run.accepted_records()) {
        EXPECT_EQ(oracle::batch_reward(r.response, by_id.at(r.instance_id)->answer), 1.0);
        EXPECT_EQ(r.prompt, render_batch_prompt(*by_id.at(r.instance_id)).text);
    }
}

TEST(HttpGenerator, SplitBaseUrl) {
    const auto u = split_base_url("http://localhost:8000/v1/");
    EXPECT_EQ(u.scheme_host_port, "http://localhost:8000");
    EXPECT_EQ(u.path_prefix, "/v1");
    EXPECT_THROW(split_base_url("localhost:8000"), UsageError);
    EXPECT_THROW(split_base_url("ftp://x"), UsageError);
}

TEST(HttpGenerator, RequestShapeAndReply) {
    const auto b = instance8();
    support::MockChatServer server([](const std::string& prompt) { return "echo:" + prompt.substr(0, 10); }, "sekret");
    ScopedEnv env("BATCHANNO_TEST_KEY", "sekret");
    GeneratorEndpoint endpoint;
    endpoint.base_url = server.base_url();
    endpoint.model_name = "teacher-x";
    endpoint.api_key_env = "BATCHANNO_TEST_KEY";
    endpoint.temperature = 0.7;
    HttpChatGenerator gen(endpoint);
    gen.authenticate();
    const auto r = gen.generate({"i", 0, "You are an expert"});
    ASSERT_TRUE(r.ok) << r.error;
    EXPECT_EQ(r.text, "echo:You are an");
    const auto body = server.last_body();
    EXPECT_EQ(body.at("model"), "teacher-x");
    EXPECT_EQ(body.at("messages").at(0).at("role"), "user");
    EXPECT_EQ(body.at("temperature"), 0.7);
    EXPECT_EQ(body.at("n"), 1);
}

TEST(HttpGenerator, MissingKeyIsAuthError) {
    ScopedEnv env("BATCHANNO_TEST_KEY", nullptr);
    GeneratorEndpoint endpoint;
    endpoint.api_key_env = "BATCHANNO_TEST_KEY";
    HttpChatGenerator gen(endpoint);
    EXPECT_THROW(gen.authenticate(), AuthError);
}

TEST(HttpGenerator, WrongKeyIsAuthError) {
    support::MockChatServer server([](const std::string&) { return "x"; }, "right");
    ScopedEnv env("BATCHANNO_TEST_KEY", "wrong");
    GeneratorEndpoint endpoint;
    endpoint.base_url = server.base_url();
    endpoint.api_key_env = "BATCHANNO_TEST_KEY";
    HttpChatGenerator gen(endpoint);
    gen.authenticate();
    EXPECT_THROW(gen.generate({"i", 0, "p"}), AuthError);
}

TEST(HttpGenerator, ServerErrorsAreRetried) {
    const auto b = instance8();
    std::vector<BatchInstance> corpus{b};
    support::MockChatServer server(support::perfect_teacher(corpus), "k");
    ScopedEnv env("BATCHANNO_TEST_KEY", "k");
    GeneratorEndpoint endpoint;
    endpoint.base_url = server.base_url();
    endpoint.api_key_env = "BATCHANNO_TEST_KEY";
    endpoint.max_retries = 2;
    endpoint.max_concurrency = 1;
    HttpChatGenerator gen(endpoint);
    server.fail_next(2);
    const auto c = sample_candidates(b, gen, 1, endpoint);
    ASSERT_FALSE(c[0].transport_failed) << c[0].error;
    EXPECT_EQ(server.requests(), 3u);
    EXPECT_EQ(filter_accept(c, b, "p").accepted, 1u);
}

TEST(HttpGenerator, UnreachableEndpointIsTransportFailure) {
    ScopedEnv env("BATCHANNO_TEST_KEY", "k");
    GeneratorEndpoint endpoint;
    endpoint.base_url = "http://127.0.0.1:9/v1";
    endpoint.api_key_env = "BATCHANNO_TEST_KEY";
    endpoint.request_timeout = std::chrono::milliseconds(500);
    endpoint.max_retries = 1;
    HttpChatGenerator gen(endpoint);
    const auto c = sample_candidates(instance8(), gen, 2, endpoint);
    EXPECT_TRUE(c[0].transport_failed);
    EXPECT_TRUE(c[1].transport_failed);
}
