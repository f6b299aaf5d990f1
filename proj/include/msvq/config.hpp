// Copyright 2026 The msvq Authors.
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
#include <string_view>
#include <vector>

#include "msvq/trainer.hpp"

namespace msvq {

struct RunConfig {
  TrainConfig train;
  std::string preset = "desk";
  bool seed_set = false;
};

// Named starting points: "desk", "paper", "tab7-row1" ... "tab7-row5". Rows add terms
// cumulatively: align; +cm; +cctr,cuni; +orth,uni; +recon. Commitment stays on in all.
TrainConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

// Flat `key = value` lines, `#` comments, dotted keys. A `preset` key is applied before the
// other keys wherever it appears. Errors are ConfigError with a line and field diagnostic.
RunConfig parse_config(std::string_view text);

// ConfigError naming `seed` when neither the file nor an override supplied one.
void require_seed(const RunConfig& config);

}  // namespace msvq
