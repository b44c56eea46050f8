#pragma once

#include <stdexcept>
#include <string>

namespace fpoct {

/// Broad failure classes; the CLI maps each to its own exit code.
enum class ErrorKind {
  Config,   ///< bad parameters or configuration values
  Data,     ///< missing, unreadable or malformed files and datasets
  Numeric,  ///< non-finite values, singular systems
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return Error(ErrorKind::Config, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::Data, what); }
inline Error numeric_error(const std::string& what) { return Error(ErrorKind::Numeric, what); }

}  // namespace fpoct
