#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pforge/errors.hpp"

#include <nlohmann/json.hpp>

namespace pforge::llm {

class TransportError : public Error {
public:
    explicit TransportError(const std::string& what) : Error(what) {}
};

class ScriptExhausted : public Error {
public:
    explicit ScriptExhausted(const std::string& what) : Error(what) {}
};

class ScriptMismatch : public Error {
public:
    explicit ScriptMismatch(const std::string& what) : Error(what) {}
};

struct ChatMessage {
    std::string role; // "system", "user", "assistant"
    std::string content;
    bool operator==(const ChatMessage&) const = default;
};

struct RequestParams {
    double temperature = 0.2;
    int max_tokens = 2048;
    bool operator==(const RequestParams&) const = default;
};

/// One request/response pair as persisted to a .jsonl transcript.
struct ChatExchange {
    int index = 0;
    std::string model;
    std::vector<ChatMessage> messages;
    RequestParams params;
    std::string response;
    std::string timestamp;

    nlohmann::json to_json() const;
    static ChatExchange from_json(const nlohmann::json& j);
};

/// Stable 64-bit FNV-1a hash of (messages, params); used by strict
/// replay matching.
std::uint64_t request_hash(const std::vector<ChatMessage>& messages,
                           const RequestParams& params);

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages,
                                 const RequestParams& params) = 0;
    virtual std::string model_label() const = 0;
};

/// Canned responses in call order; for tests and handwritten fixtures.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<std::string> responses,
                             std::string model_label = "scripted");
    std::string complete(const std::vector<ChatMessage>& messages,
                         const RequestParams& params) override;
    std::string model_label() const override { return model_label_; }
    size_t calls() const { return next_; }

private:
    std::vector<std::string> responses_;
    size_t next_ = 0;
    std::string model_label_;
};

enum class ReplayMatch {
    Lenient, // responses keyed by call index
    Strict,  // call must hash-match the recorded request
};

/// Replays a recorded transcript; never touches the network.
class ReplayBackend : public Backend {
public:
    ReplayBackend(std::vector<ChatExchange> exchanges,
                  ReplayMatch mode = ReplayMatch::Lenient);
    static ReplayBackend from_file(const std::string& path,
                                   ReplayMatch mode = ReplayMatch::Lenient);

    std::string complete(const std::vector<ChatMessage>& messages,
                         const RequestParams& params) override;
    std::string model_label() const override { return "replay"; }

private:
    std::vector<ChatExchange> exchanges_;
    size_t next_ = 0;
    ReplayMatch mode_;
};

/// One HTTPS chat-completion call per complete(). Credentials come from
/// the environment only (PFORGE_LLM_API_KEY / _BASE_URL / _MODEL).
class LiveBackend : public Backend {
public:
    struct Config {
        std::string base_url; // e.g. https://api.openai.com/v1
        std::string api_key;
        std::string model;
    };
    static Config config_from_env();

    explicit LiveBackend(Config cfg);
    std::string complete(const std::vector<ChatMessage>& messages,
                         const RequestParams& params) override;
    std::string model_label() const override { return cfg_.model; }

private:
    Config cfg_;
};

std::vector<ChatExchange> read_transcript(const std::string& path);

/// Session-scoped gateway: serializes calls, numbers exchanges, and
/// appends each exchange to the transcript sink before surfacing the
/// response.
class Session {
public:
    explicit Session(Backend& backend, std::string transcript_path = "");

    std::string complete(const std::vector<ChatMessage>& messages,
                         const RequestParams& params = {});

    const std::vector<ChatExchange>& transcript() const { return transcript_; }
    int exchange_count() const { return index_; }

private:
    Backend& backend_;
    std::optional<std::ofstream> sink_;
    std::vector<ChatExchange> transcript_;
    int index_ = 0;
    std::mutex mutex_;
};

} // namespace pforge::llm
