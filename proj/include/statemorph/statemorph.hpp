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

// Umbrella header: state-transformation feasibility analysis and channel
// construction for finite-dimensional quantum states.

#pragma once

#include "statemorph/channels.hpp"
#include "statemorph/decide.hpp"
#include "statemorph/errors.hpp"
#include "statemorph/feasibility.hpp"
#include "statemorph/io.hpp"
#include "statemorph/matrix.hpp"
#include "statemorph/random.hpp"
#include "statemorph/selftest.hpp"
#include "statemorph/states.hpp"
