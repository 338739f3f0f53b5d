#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cpdp/error.hpp"

namespace cpdp::detail {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Parses JSON, turning parse failures into ErrorCode::kParse with line and
// column of the offending byte.
json parse_json(const std::string& text, std::string_view what);

// null -> fallback (used for +/- infinity); numbers pass through.
double number_or(const json& j, double fallback, std::string_view field);

template <typename T>
T get_field(const json& j, std::string_view key, std::string_view what) {
  auto it = j.find(std::string(key));
  if (it == j.end()) {
    throw Error(ErrorCode::kParse, std::string(what) + ": missing field '" + std::string(key) + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse,
                std::string(what) + ": field '" + std::string(key) + "': " + e.what());
  }
}

}  // namespace cpdp::detail
