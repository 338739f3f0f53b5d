#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cpdp {

// Machine-readable error categories. The CLI prints code_name() verbatim.
enum class ErrorCode {
  kInvalidArgument,
  kUnsupportedShape,
  kDegenerateTruncation,
  kEmptyDataset,
  kEmptyCloud,
  kParse,
  kValidation,
  kConfig,
  kIo,
};

std::string_view code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Every Monte-Carlo sample of a step violated the scene.
class EmptyCloudError : public Error {
 public:
  EmptyCloudError(std::size_t rejected, const std::string& message)
      : Error(ErrorCode::kEmptyCloud, message), rejected_(rejected) {}

  std::size_t rejected_count() const noexcept { return rejected_; }

 private:
  std::size_t rejected_;
};

[[noreturn]] void throw_invalid(const std::string& message);

}  // namespace cpdp
