// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <stdexcept>
#include <string>

namespace gss {

/// Base of every error raised by the engine.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InvalidScale : public Error {
  public:
    using Error::Error;
};

class DegenerateRotation : public Error {
  public:
    using Error::Error;
};

/// Deformation evaluated outside its one-interval validity window.
class OutOfWindow : public Error {
  public:
    using Error::Error;
};

class ShapeError : public Error {
  public:
    using Error::Error;
};

/// Depth plane with zero deviation from its median; cannot be tau-normalised.
class DegenerateDepth : public Error {
  public:
    using Error::Error;
};

class FitDiverged : public Error {
  public:
    using Error::Error;
};

class SpecError : public Error {
  public:
    using Error::Error;
};

/// Malformed input file or configuration.
class ParseError : public Error {
  public:
    using Error::Error;
};

class PredictorError : public Error {
  public:
    using Error::Error;
};

} // namespace gss
