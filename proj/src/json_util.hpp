#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"
#include "peot/error.hpp"

namespace peot::detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       const std::string& context) {
  if (!j.is_object()) throw_config(context + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw_config(context + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& context) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw_config(context + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace peot::detail
