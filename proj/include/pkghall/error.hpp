#pragma once

#include <stdexcept>
#include <string>

namespace pkghall {

enum class Errc {
    empty_name,
    illegal_name,
    unreadable_file,
    format_error,
    ecosystem_mismatch,
    date_order_error,
    network_error,
    http_status_error,
    rate_limited,
    unsupported_param,
    replay_miss,
    sample_mismatch,
    mixed_language,
    missing_column,
    empty_index,
    empty_store,
    store_error,
    config_error,
    usage_error,
};

inline const char* errc_name(Errc c) {
    switch (c) {
    case Errc::empty_name: return "EmptyName";
    case Errc::illegal_name: return "IllegalName";
    case Errc::unreadable_file: return "UnreadableFile";
    case Errc::format_error: return "FormatError";
    case Errc::ecosystem_mismatch: return "EcosystemMismatch";
    case Errc::date_order_error: return "DateOrderError";
    case Errc::network_error: return "NetworkError";
    case Errc::http_status_error: return "HttpStatusError";
    case Errc::rate_limited: return "RateLimited";
    case Errc::unsupported_param: return "UnsupportedParam";
    case Errc::replay_miss: return "ReplayMiss";
    case Errc::sample_mismatch: return "SampleMismatch";
    case Errc::mixed_language: return "MixedLanguage";
    case Errc::missing_column: return "MissingColumn";
    case Errc::empty_index: return "EmptyIndex";
    case Errc::empty_store: return "EmptyStore";
    case Errc::store_error: return "StoreError";
    case Errc::config_error: return "ConfigError";
    case Errc::usage_error: return "UsageError";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace pkghall
