#pragma once

#include <stdexcept>
#include <string>

namespace blueprint {

/// Base class for every error raised by the toolkit. Messages are meant to be
/// shown to a user verbatim (file/line context is prepended by loaders).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersion = "0.1.0";

}  // namespace blueprint
