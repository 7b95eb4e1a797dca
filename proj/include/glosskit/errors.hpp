#pragma once

#include <stdexcept>
#include <string>

namespace glosskit {

// Error category, used by the CLI to pick an exit code
// (config -> 1, data -> 2, runtime -> 3).
enum class ErrorKind { Config, Data, Runtime };

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& msg) {
    return Error(ErrorKind::Config, "ConfigError: " + msg);
}

inline Error invalid_spec(const std::string& msg) {
    return Error(ErrorKind::Config, "InvalidSpec: " + msg);
}

inline Error malformed_record(long line, const std::string& msg) {
    return Error(ErrorKind::Data,
                 "MalformedRecord at line " + std::to_string(line) + ": " + msg);
}

inline Error misaligned_gloss(long line, const std::string& msg) {
    return Error(ErrorKind::Data,
                 "MisalignedGloss at line " + std::to_string(line) + ": " + msg);
}

inline Error empty_corpus(const std::string& what) {
    return Error(ErrorKind::Data, "EmptyCorpus: " + what);
}

inline Error unassigned_genre(const std::string& name) {
    return Error(ErrorKind::Data, "UnassignedGenre: genre '" + name +
                                      "' is not in the ID or OOD genre sets");
}

inline Error vocab_mismatch(const std::string& msg) {
    return Error(ErrorKind::Data, "VocabMismatch: " + msg);
}

inline Error length_mismatch(const std::string& msg) {
    return Error(ErrorKind::Data, "LengthMismatch: " + msg);
}

inline Error shape_mismatch(const std::string& msg) {
    return Error(ErrorKind::Runtime, "ShapeMismatch: " + msg);
}

inline Error non_scalar_loss(const std::string& msg) {
    return Error(ErrorKind::Runtime, "NonScalarLoss: " + msg);
}

inline Error id_out_of_range(const std::string& msg) {
    return Error(ErrorKind::Runtime, "IdOutOfRange: " + msg);
}

inline Error sequence_too_long(const std::string& msg) {
    return Error(ErrorKind::Runtime, "SequenceTooLong: " + msg);
}

inline Error runtime_error(const std::string& msg) {
    return Error(ErrorKind::Runtime, msg);
}

} // namespace glosskit
