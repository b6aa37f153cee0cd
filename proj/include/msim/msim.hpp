// Copyright 2026 The msim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "msim/sim_core.hpp"
#include "msim/model.hpp"
#include "msim/workload.hpp"
#include "msim/instance.hpp"
#include "msim/gateway.hpp"
#include "msim/metrics.hpp"
#include "msim/oracle.hpp"
#include "msim/config.hpp"
#include "msim/simulation.hpp"
