#pragma once

#include <stdexcept>
#include <string>

namespace wsipipe {

// Error taxonomy used across the pipeline. The CLI maps these onto exit
// codes: InvalidInput and its data-shaped siblings -> 2, NumericalError -> 3.

struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

struct RegionOutOfBounds : InvalidInput {
  explicit RegionOutOfBounds(const std::string& msg) : InvalidInput(msg) {}
};

struct InvalidLevel : InvalidInput {
  explicit InvalidLevel(const std::string& msg) : InvalidInput(msg) {}
};

struct EmptySlide : InvalidInput {
  explicit EmptySlide(const std::string& msg) : InvalidInput(msg) {}
};

struct EmptyPatient : InvalidInput {
  explicit EmptyPatient(const std::string& msg) : InvalidInput(msg) {}
};

struct UndefinedMetric : InvalidInput {
  explicit UndefinedMetric(const std::string& msg) : InvalidInput(msg) {}
};

struct DegenerateBootstrap : InvalidInput {
  explicit DegenerateBootstrap(const std::string& msg) : InvalidInput(msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wsipipe
