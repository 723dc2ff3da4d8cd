#pragma once

#include <stdexcept>
#include <string>

namespace deepstruct {

// Error taxonomy mirrors the CLI exit-code contract:
//   IoError          -> exit 2 (filesystem, unreadable/unwritable paths)
//   ValidationError  -> exit 3 (config, format, graph or compatibility problems)
// anything else      -> exit 1

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config errors carry a 1-based source line when known (0 = whole document).
struct ConfigError : ValidationError {
  int line = 0;
  ConfigError(const std::string& msg, int line_no = 0)
      : ValidationError(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg
                                    : msg),
        line(line_no) {}
};

}  // namespace deepstruct
