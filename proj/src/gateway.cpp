#include "pforge/llm/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>

#include <httplib.h>

namespace pforge::llm {

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json messages_to_json(const std::vector<ChatMessage>& messages) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : messages)
        arr.push_back({{"role", m.role}, {"content", m.content}});
    return arr;
}

std::vector<ChatMessage> messages_from_json(const nlohmann::json& arr) {
    std::vector<ChatMessage> out;
    for (const auto& m : arr)
        out.push_back({m.at("role").get<std::string>(),
                       m.at("content").get<std::string>()});
    return out;
}

} // namespace

nlohmann::json ChatExchange::to_json() const {
    return {{"index", index},
            {"model", model},
            {"messages", messages_to_json(messages)},
            {"params",
             {{"temperature", params.temperature},
              {"max_tokens", params.max_tokens}}},
            {"response", response},
            {"timestamp", timestamp}};
}

ChatExchange ChatExchange::from_json(const nlohmann::json& j) {
    ChatExchange e;
    e.index = j.at("index").get<int>();
    e.model = j.value("model", "");
    e.messages = messages_from_json(j.at("messages"));
    if (j.contains("params")) {
        e.params.temperature = j["params"].value("temperature", 0.2);
        e.params.max_tokens = j["params"].value("max_tokens", 2048);
    }
    e.response = j.at("response").get<std::string>();
    e.timestamp = j.value("timestamp", "");
    return e;
}

std::uint64_t request_hash(const std::vector<ChatMessage>& messages,
                           const RequestParams& params) {
    nlohmann::json j = {{"messages", messages_to_json(messages)},
                        {"params",
                         {{"temperature", params.temperature},
                          {"max_tokens", params.max_tokens}}}};
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull; // FNV offset basis
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull; // FNV prime
    }
    return h;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses,
                                 std::string model_label)
    : responses_(std::move(responses)), model_label_(std::move(model_label)) {}

std::string ScriptedBackend::complete(const std::vector<ChatMessage>&,
                                      const RequestParams&) {
    if (next_ >= responses_.size())
        throw ScriptExhausted("scripted backend has no response for call #" +
                              std::to_string(next_ + 1));
    return responses_[next_++];
}

ReplayBackend::ReplayBackend(std::vector<ChatExchange> exchanges,
                             ReplayMatch mode)
    : exchanges_(std::move(exchanges)), mode_(mode) {}

ReplayBackend ReplayBackend::from_file(const std::string& path,
                                       ReplayMatch mode) {
    return ReplayBackend(read_transcript(path), mode);
}

std::string ReplayBackend::complete(const std::vector<ChatMessage>& messages,
                                    const RequestParams& params) {
    if (next_ >= exchanges_.size())
        throw ScriptExhausted("replay transcript exhausted at call #" +
                              std::to_string(next_ + 1));
    const ChatExchange& rec = exchanges_[next_];
    if (mode_ == ReplayMatch::Strict) {
        const auto want = request_hash(rec.messages, rec.params);
        const auto got = request_hash(messages, params);
        if (want != got)
            throw ScriptMismatch("request #" + std::to_string(next_) +
                                 " does not match the recorded transcript");
    }
    ++next_;
    return rec.response;
}

LiveBackend::Config LiveBackend::config_from_env() {
    Config cfg;
    if (const char* v = std::getenv("PFORGE_LLM_BASE_URL"))
        cfg.base_url = v;
    if (const char* v = std::getenv("PFORGE_LLM_API_KEY"))
        cfg.api_key = v;
    if (const char* v = std::getenv("PFORGE_LLM_MODEL"))
        cfg.model = v;
    if (cfg.base_url.empty())
        cfg.base_url = "https://api.openai.com/v1";
    if (cfg.model.empty())
        cfg.model = "o3-mini";
    return cfg;
}

LiveBackend::LiveBackend(Config cfg) : cfg_(std::move(cfg)) {
    if (cfg_.api_key.empty())
        throw TransportError("live backend requires PFORGE_LLM_API_KEY");
}

std::string LiveBackend::complete(const std::vector<ChatMessage>& messages,
                                  const RequestParams& params) {
    // Split base_url into scheme://host[:port] and a path prefix.
    const auto scheme_end = cfg_.base_url.find("://");
    if (scheme_end == std::string::npos)
        throw TransportError("malformed base url '" + cfg_.base_url + "'");
    const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos
                                   ? cfg_.base_url
                                   : cfg_.base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos
                             ? ""
                             : cfg_.base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (origin.rfind("https", 0) == 0)
        throw TransportError("built without TLS support, cannot use " + origin);
#endif

    httplib::Client client(origin);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);

    nlohmann::json body = {{"model", cfg_.model},
                           {"messages", messages_to_json(messages)},
                           {"temperature", params.temperature},
                           {"max_tokens", params.max_tokens}};
    httplib::Headers headers = {
        {"Authorization", "Bearer " + cfg_.api_key},
    };
    auto res = client.Post(prefix + "/chat/completions", headers, body.dump(),
                           "application/json");
    if (!res)
        throw TransportError("chat completion request failed: " +
                             httplib::to_string(res.error()));
    if (res->status != 200)
        throw TransportError("chat completion HTTP " +
                             std::to_string(res->status) + ": " + res->body);
    try {
        auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content")
            .get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("unexpected completion payload: ") +
                             e.what());
    }
}

std::vector<ChatExchange> read_transcript(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw TransportError("cannot open transcript '" + path + "'");
    std::vector<ChatExchange> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            out.push_back(ChatExchange::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw TransportError("transcript '" + path + "' line " +
                                 std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

Session::Session(Backend& backend, std::string transcript_path)
    : backend_(backend) {
    if (!transcript_path.empty()) {
        sink_.emplace(transcript_path, std::ios::app);
        if (!*sink_)
            throw TransportError("cannot open transcript sink '" +
                                 transcript_path + "'");
    }
}

std::string Session::complete(const std::vector<ChatMessage>& messages,
                              const RequestParams& params) {
    std::lock_guard<std::mutex> lock(mutex_);
    ChatExchange e;
    e.index = index_++;
    e.model = backend_.model_label();
    e.messages = messages;
    e.params = params;
    e.response = backend_.complete(messages, params);
    e.timestamp = utc_timestamp();
    // Persist before surfacing so a crash downstream cannot lose the
    // exchange.
    if (sink_) {
        *sink_ << e.to_json().dump() << "\n";
        sink_->flush();
    }
    transcript_.push_back(e);
    return transcript_.back().response;
}

} // namespace pforge::llm
