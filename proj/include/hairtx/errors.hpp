#pragma once

#include <stdexcept>
#include <string>

namespace hairtx {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyMask : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyRegion : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MaskOrderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UndefinedIoU : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InpaintUnderdetermined : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LevelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LandmarkError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ManifestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hairtx
