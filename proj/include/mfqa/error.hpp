#pragma once

#include <stdexcept>
#include <string>

namespace mfqa {

/// Machine-readable failure categories shared by every module.
enum class Errc {
  index,
  shape,
  degenerate_input,
  empty_sequence,
  infeasible,
  unmapped_type,
  parse,
  validation,
  conflict,
  not_found,
  empty_question,
  payload_too_large,
  io,
  config,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::index: return "index_error";
    case Errc::shape: return "shape_error";
    case Errc::degenerate_input: return "degenerate_input";
    case Errc::empty_sequence: return "empty_sequence";
    case Errc::infeasible: return "infeasible";
    case Errc::unmapped_type: return "unmapped_type";
    case Errc::parse: return "parse_error";
    case Errc::validation: return "validation_error";
    case Errc::conflict: return "conflict";
    case Errc::not_found: return "not_found";
    case Errc::empty_question: return "empty_question";
    case Errc::payload_too_large: return "payload_too_large";
    case Errc::io: return "io_error";
    case Errc::config: return "config_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }
  const char* code_name() const noexcept { return errc_name(code_); }

 private:
  Errc code_;
};

}  // namespace mfqa
