#pragma once

#include <functional>
#include <string_view>

namespace mrsim {

using WarningSink = std::function<void(std::string_view)>;

/// Route library warnings (clamped weights and similar recoverable events).
/// Defaults to stderr; pass an empty function to silence.
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

} // namespace mrsim
