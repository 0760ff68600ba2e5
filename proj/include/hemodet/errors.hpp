#pragma once

#include <stdexcept>
#include <string>

namespace hemodet {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Config parse / validation failure; message names the offending key.
struct ConfigError : Error {
  using Error::Error;
};

/// Dataset layout / decode failure; message names the clip or frame.
struct DataError : Error {
  using Error::Error;
};

/// Non-recoverable training failure (non-finite loss). Carries the path of
/// the diagnostic dump written before aborting.
struct TrainAbort : Error {
  TrainAbort(const std::string& msg, std::string dump) : Error(msg), dump_path(std::move(dump)) {}
  std::string dump_path;
};

}  // namespace hemodet
