// Copyright 2026 the drselect authors
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

#include "drselect/corpusio.hpp"
#include "drselect/error.hpp"
#include "drselect/gaussdist.hpp"
#include "drselect/ireval.hpp"
#include "drselect/metaeval.hpp"
#include "drselect/perturb.hpp"
#include "drselect/pipeline.hpp"
#include "drselect/retrieval.hpp"
#include "drselect/selectors.hpp"
