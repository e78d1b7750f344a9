/*
 * Copyright 2026 The HierCL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace hiercl {

/// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Label-tree construction / lookup.
struct MultipleRoots : Error {
  using Error::Error;
};
struct CycleDetected : Error {
  using Error::Error;
};
struct UnknownParent : Error {
  using Error::Error;
};
struct LevelOutOfRange : Error {
  using Error::Error;
};
struct UnknownCategory : Error {
  using Error::Error;
};

// Contrastive losses.
struct DegenerateBatch : Error {
  using Error::Error;
};
struct EmptyLevel : Error {
  using Error::Error;
};
struct ZeroVector : Error {
  using Error::Error;
};

// Attention / matching shapes.
struct DimensionMismatch : Error {
  using Error::Error;
};
struct InfeasibleShape : Error {
  using Error::Error;
};

// Training loop.
struct DivergenceDetected : Error {
  using Error::Error;
};

}  // namespace hiercl
