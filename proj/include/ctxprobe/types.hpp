#pragma once

#include <cstdint>
#include <string_view>

namespace ctxprobe {

/// Ground truth for one conversational turn. Out-of-context is the positive class.
enum class Label : std::uint8_t { in_context = 0, out_of_context = 1 };

inline bool is_positive(Label label) { return label == Label::out_of_context; }

inline std::string_view to_string(Label label) {
  return label == Label::in_context ? "in_context" : "out_of_context";
}

}  // namespace ctxprobe
