#include <cstdlib>
#include <memory>

#include "cotadapt/backend.hpp"
#include "cotadapt/mock_server.hpp"
#include "cotadapt/remote_backend.hpp"
#include "cotadapt/sim.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace cotadapt;
using json = nlohmann::json;

namespace {

std::string sample_prompt() {
    SyntheticTask task = synthetic_task_for(3, 1);
    return "Question: " + task.question +
           "\nRationale so far: " + task.step_texts[0] +
           "\nContinue reasoning step by step, and put your final answer within \\boxed{}.";
}

RemoteConfig local_config(const MockServer& server) {
    RemoteConfig cfg;
    cfg.base_url = server.base_url();
    cfg.api_key_env = "";  // no auth by default
    cfg.timeout_s = 10;
    cfg.backoff_base_s = 0.01;
    return cfg;
}

}  // namespace

TEST_CASE("sampling params are validated and fingerprinted") {
    SamplingParams p;
    CHECK_NOTHROW(p.validate());
    p.n = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.n = 4;
    p.temperature = -0.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.temperature = 0.7;
    p.max_new_tokens = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.max_new_tokens = 2000;

    SamplingParams q = p;
    CHECK(p.fingerprint() == q.fingerprint());
    q.seed = 7;
    CHECK(p.fingerprint() != q.fingerprint());
    q.seed.reset();
    q.stop = {"\n\n"};
    CHECK(p.fingerprint() != q.fingerprint());
}

TEST_CASE("mock server speaks the completions protocol") {
    auto backend = std::make_shared<ScriptedStudent>(StudentModel{.capacity = 0.5, .seed = 9});
    MockServer server(backend);
    server.start();

    httplib::Client client(server.base_url());

    SUBCASE("returns n ordered choices") {
        json body = {{"model", "scripted"},
                     {"prompt", sample_prompt()},
                     {"n", 4},
                     {"temperature", 0.1},
                     {"max_tokens", 4000}};
        auto res = client.Post("/v1/completions", body.dump(), "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        json reply = json::parse(res->body);
        CHECK(reply["object"] == "text_completion");
        REQUIRE(reply["choices"].is_array());
        REQUIRE(reply["choices"].size() == 4);
        for (size_t i = 0; i < 4; ++i) {
            CHECK(reply["choices"][i]["index"] == i);
            CHECK(reply["choices"][i]["text"].is_string());
            std::string reason = reply["choices"][i]["finish_reason"];
            CHECK((reason == "stop" || reason == "length"));
        }
    }

    SUBCASE("missing prompt yields 400 with an error object") {
        auto res = client.Post("/v1/completions", R"({"n": 2})", "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        json reply = json::parse(res->body);
        CHECK(reply["error"]["type"] == "invalid_request_error");
    }

    SUBCASE("malformed JSON yields 400") {
        auto res = client.Post("/v1/completions", "{nope", "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
    }

    SUBCASE("invalid sampling settings yield 400") {
        json body = {{"prompt", "p"}, {"n", 0}};
        auto res = client.Post("/v1/completions", body.dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
    }

    SUBCASE("tiny max_tokens truncates with finish_reason length") {
        json body = {{"prompt", sample_prompt()}, {"n", 1}, {"max_tokens", 3},
                     {"temperature", 0.0}};
        auto res = client.Post("/v1/completions", body.dump(), "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        json reply = json::parse(res->body);
        CHECK(reply["choices"][0]["finish_reason"] == "length");
    }

    SUBCASE("health endpoint answers") {
        auto res = client.Get("/healthz");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->body == "ok");
    }
}

TEST_CASE("remote backend returns the scripted student's completions byte for byte") {
    StudentModel model{.capacity = 0.4, .seed = 21};
    auto backend = std::make_shared<ScriptedStudent>(model);
    MockServer server(backend);
    server.start();

    RemoteBackend remote(local_config(server));
    ScriptedStudent local(model);

    SamplingParams params;
    params.n = 6;
    params.temperature = 0.7;
    params.max_new_tokens = 2000;

    std::string prompt = sample_prompt();
    auto via_http = remote.sample_continuations(prompt, params);
    auto direct = local.sample_continuations(prompt, params);
    REQUIRE(via_http.size() == direct.size());
    for (size_t i = 0; i < direct.size(); ++i) {
        CHECK(via_http[i].text == direct[i].text);
        CHECK(via_http[i].finish_reason == direct[i].finish_reason);
    }
    CHECK(remote.request_count() == 1);
    CHECK(remote.completion_count() == 6);
}

TEST_CASE("remote backend retries transient failures with backoff") {
    auto backend = std::make_shared<ScriptedStudent>(StudentModel{.capacity = 0.5, .seed = 1});
    MockServer server(backend);
    server.start();

    RemoteConfig cfg = local_config(server);
    cfg.max_attempts = 3;

    SamplingParams params;
    params.n = 2;

    SUBCASE("recovers when a retry succeeds") {
        server.fail_next(2);
        RemoteBackend remote(cfg);
        auto got = remote.sample_continuations(sample_prompt(), params);
        CHECK(got.size() == 2);
        CHECK(server.handled_requests() == 3);
    }

    SUBCASE("gives up after max attempts") {
        server.fail_next(5);
        RemoteBackend remote(cfg);
        CHECK_THROWS_AS(remote.sample_continuations(sample_prompt(), params), BackendError);
        CHECK(server.handled_requests() == 3);
    }

    SUBCASE("non-retryable client errors fail immediately") {
        MockServer authed(backend, "sekrit");
        authed.start();
        RemoteConfig bad = cfg;
        bad.base_url = authed.base_url();
        RemoteBackend remote(bad);  // sends no Authorization header
        CHECK_THROWS_AS(remote.sample_continuations(sample_prompt(), params), BackendError);
        CHECK(authed.handled_requests() == 1);  // 401 is not retried
    }
}

TEST_CASE("remote backend sends the bearer token from the environment") {
    auto backend = std::make_shared<ScriptedStudent>(StudentModel{.capacity = 0.5, .seed = 1});
    MockServer server(backend, "token-123");
    server.start();

    setenv("COTADAPT_TEST_KEY", "token-123", 1);
    RemoteConfig cfg = local_config(server);
    cfg.api_key_env = "COTADAPT_TEST_KEY";
    RemoteBackend remote(cfg);

    SamplingParams params;
    params.n = 1;
    auto got = remote.sample_continuations(sample_prompt(), params);
    CHECK(got.size() == 1);
    unsetenv("COTADAPT_TEST_KEY");
}

TEST_CASE("remote backend surfaces unreachable endpoints as BackendError") {
    RemoteConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";  // nothing listens here
    cfg.api_key_env = "";
    cfg.max_attempts = 2;
    cfg.backoff_base_s = 0.01;
    cfg.timeout_s = 1;
    RemoteBackend remote(cfg);
    SamplingParams params;
    CHECK_THROWS_AS(remote.sample_continuations("p", params), BackendError);
}

TEST_CASE("stop sequences cut completions at the first occurrence") {
    ScriptedStudent student(StudentModel{.capacity = 1.0, .seed = 5, .slip = 0.0});
    SamplingParams params;
    params.n = 1;
    params.temperature = 0.0;
    params.max_new_tokens = 4000;

    auto full = student.sample_continuations(sample_prompt(), params);
    REQUIRE(full.size() == 1);
    REQUIRE(full[0].text.find('\n') != std::string::npos);

    params.stop = {"\n"};
    auto cut = student.sample_continuations(sample_prompt(), params);
    REQUIRE(cut.size() == 1);
    CHECK(cut[0].text == full[0].text.substr(0, full[0].text.find('\n')));
    CHECK(cut[0].finish_reason == FinishReason::stop);
}

TEST_CASE("request seed overrides the scripted student's own seed") {
    StudentModel a{.capacity = 0.5, .seed = 1};
    StudentModel b{.capacity = 0.5, .seed = 2};
    ScriptedStudent sa(a), sb(b);
    SamplingParams params;
    params.n = 8;
    params.temperature = 0.7;
    params.seed = 99;

    auto ca = sa.sample_continuations(sample_prompt(), params);
    auto cb = sb.sample_continuations(sample_prompt(), params);
    REQUIRE(ca.size() == cb.size());
    for (size_t i = 0; i < ca.size(); ++i) CHECK(ca[i].text == cb[i].text);
}
