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

#include "hiercl/contrastive.hpp"
#include "hiercl/decoupled.hpp"
#include "hiercl/embedding.hpp"
#include "hiercl/errors.hpp"
#include "hiercl/geometry.hpp"
#include "hiercl/gradcheck.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/io.hpp"
#include "hiercl/matching.hpp"
#include "hiercl/matrix.hpp"
#include "hiercl/metrics.hpp"
#include "hiercl/prototypes.hpp"
#include "hiercl/random.hpp"
#include "hiercl/synthetic.hpp"
#include "hiercl/train.hpp"
