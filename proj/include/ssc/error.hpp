#pragma once

#include <stdexcept>
#include <string>

namespace ssc {

/// Base of every error raised by the toolkit. Callers that only need a
/// message can catch this; the subclasses let tests and the CLI tell the
/// failure classes apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPoseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class InvalidTrackError : public Error {
 public:
  using Error::Error;
};

class EmptyModelError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Raised by the pipeline driver; wraps the cause with stage and frame.
class StageError : public Error {
 public:
  StageError(std::string stage, long frame, const std::string& cause)
      : Error("stage '" + stage + "'" +
              (frame >= 0 ? " frame " + std::to_string(frame) : std::string()) + ": " + cause),
        stage_(std::move(stage)),
        frame_(frame) {}
  const std::string& stage() const { return stage_; }
  long frame() const { return frame_; }

 private:
  std::string stage_;
  long frame_;
};

}  // namespace ssc
