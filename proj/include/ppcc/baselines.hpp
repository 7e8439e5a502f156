// Copyright 2026 The PPCC Authors
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

#include <string>

#include "ppcc/affinity_graph.hpp"
#include "ppcc/dataset.hpp"
#include "ppcc/propagation.hpp"

namespace ppcc {

enum class MatchChannel { kFace, kIde, kFaceIde };

const char* to_string(MatchChannel channel);
MatchChannel parse_match_channel(const std::string& name);

/// Direct portrait matching. Each tracklet is represented by the mean of its
/// present instance features; score(k, c) is the cosine between that mean and
/// portrait c in the chosen channel. kFaceIde mixes the two cosines with
/// `weights` (a missing side contributes 0). A tracklet with no usable
/// feature stays untouched.
BeliefState match_portraits(const Dataset& ds, MatchChannel channel,
                            FusionWeights weights = {});

}  // namespace ppcc
