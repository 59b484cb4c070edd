#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hmt {

struct FieldError {
  std::string field;
  std::string message;
  friend bool operator==(const FieldError&, const FieldError&) = default;
};

/// Invalid scenario, binding or training configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
  explicit ConfigError(FieldError field) : ConfigError(std::vector<FieldError>{std::move(field)}) {}
  explicit ConfigError(std::vector<FieldError> fields)
      : std::runtime_error(join(fields)), fields_(std::move(fields)) {}

  const std::vector<FieldError>& fields() const noexcept { return fields_; }

 private:
  static std::string join(const std::vector<FieldError>& fields) {
    std::string s = "invalid configuration";
    for (const auto& f : fields) s += "; " + f.field + ": " + f.message;
    return s;
  }
  std::vector<FieldError> fields_;
};

/// An operation was called outside its precondition.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Training could not continue (empty demo pools, non-finite loss, ...).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hmt
