#pragma once

#include <stdexcept>
#include <string>

namespace mga {

// Error taxonomy shared by the whole library. The `kind` survives across the
// C API boundary, where it is folded into the coarse status codes.
enum class ErrorKind {
  Dimension,    // shape/size mismatch between operands
  Length,       // sequence longer than the supported maximum
  Vocabulary,   // token id outside the embedding table
  Numeric,      // NaN/Inf encountered at an op boundary
  Degenerate,   // input outside the op's domain (e.g. zero-norm vector)
  Format,       // malformed file contents (corpus, checkpoint)
  Io,           // filesystem failure
  Config,       // bad configuration key/value or invalid toggle combination
  Generation,   // corpus generation could not satisfy its constraints
  Wiring,       // internal contract violation (mismatched parameter keys)
};

class MgaError : public std::runtime_error {
 public:
  MgaError(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : MgaError {
  explicit DimensionError(const std::string& m) : MgaError(ErrorKind::Dimension, m) {}
};
struct LengthError : MgaError {
  explicit LengthError(const std::string& m) : MgaError(ErrorKind::Length, m) {}
};
struct VocabularyError : MgaError {
  explicit VocabularyError(const std::string& m) : MgaError(ErrorKind::Vocabulary, m) {}
};
struct NumericError : MgaError {
  explicit NumericError(const std::string& m) : MgaError(ErrorKind::Numeric, m) {}
};
struct DegenerateInputError : MgaError {
  explicit DegenerateInputError(const std::string& m) : MgaError(ErrorKind::Degenerate, m) {}
};
struct FormatError : MgaError {
  explicit FormatError(const std::string& m) : MgaError(ErrorKind::Format, m) {}
};
struct IoError : MgaError {
  explicit IoError(const std::string& m) : MgaError(ErrorKind::Io, m) {}
};
struct ConfigError : MgaError {
  explicit ConfigError(const std::string& m) : MgaError(ErrorKind::Config, m) {}
};
struct GenerationError : MgaError {
  explicit GenerationError(const std::string& m) : MgaError(ErrorKind::Generation, m) {}
};
struct WiringError : MgaError {
  explicit WiringError(const std::string& m) : MgaError(ErrorKind::Wiring, m) {}
};

}  // namespace mga
