#pragma once

#include <stdexcept>
#include <string>

namespace toat {

// Bad user input: files, configs, dataset records. CLI maps this to exit 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Training aborted (e.g. non-finite loss). CLI maps this to exit 3.
class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible stored artifact (checkpoint version/shape). CLI maps this to exit 4.
class ArtifactError : public std::runtime_error {
 public:
  explicit ArtifactError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace toat
