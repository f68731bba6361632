// Copyright 2026 The statemorph authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace statemorph {

// Root of the library's exception hierarchy.  Everything thrown on a
// domain-validation failure derives from Error; unexpected internal
// conditions use plain std exceptions so callers can tell them apart.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define STATEMORPH_DEFINE_ERROR(NAME)                                 \
  class NAME : public Error {                                         \
   public:                                                            \
    explicit NAME(const std::string& what) : Error(what) {}           \
  }

// Linear-algebra layer.
STATEMORPH_DEFINE_ERROR(NonSquareError);
STATEMORPH_DEFINE_ERROR(NonHermitianError);
STATEMORPH_DEFINE_ERROR(NotPSDError);
STATEMORPH_DEFINE_ERROR(DimensionMismatchError);
STATEMORPH_DEFINE_ERROR(ShapeMismatchError);

// State sets and Gram matrices.
STATEMORPH_DEFINE_ERROR(OrthogonalPairError);
STATEMORPH_DEFINE_ERROR(MixedMemberError);

// Decision procedures.
STATEMORPH_DEFINE_ERROR(SizeMismatchError);
STATEMORPH_DEFINE_ERROR(SourceNotPureError);
STATEMORPH_DEFINE_ERROR(TargetNotPureError);
STATEMORPH_DEFINE_ERROR(WrongDimensionError);
STATEMORPH_DEFINE_ERROR(BadPriorsError);
STATEMORPH_DEFINE_ERROR(BadProbabilityMatrixError);

// Channel construction and verification.
STATEMORPH_DEFINE_ERROR(NotTracePreservingError);
STATEMORPH_DEFINE_ERROR(WitnessInconsistentError);
STATEMORPH_DEFINE_ERROR(OrthogonalTargetsError);

// Input parsing (files, CLI payloads).
STATEMORPH_DEFINE_ERROR(ParseError);

#undef STATEMORPH_DEFINE_ERROR

}  // namespace statemorph
