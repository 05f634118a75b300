/*
 * Copyright 2026 The CBLiP Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Umbrella header.

#include "cblip/checkpoint.hpp"
#include "cblip/config.hpp"
#include "cblip/connection.hpp"
#include "cblip/context.hpp"
#include "cblip/encoder.hpp"
#include "cblip/errors.hpp"
#include "cblip/eval.hpp"
#include "cblip/kg_store.hpp"
#include "cblip/model.hpp"
#include "cblip/numerics/adam.hpp"
#include "cblip/numerics/finite_diff.hpp"
#include "cblip/numerics/ops.hpp"
#include "cblip/numerics/parameters.hpp"
#include "cblip/numerics/tape.hpp"
#include "cblip/numerics/tensor.hpp"
#include "cblip/rng.hpp"
#include "cblip/synthetic.hpp"
#include "cblip/train.hpp"
