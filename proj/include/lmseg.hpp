// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lmseg/bench.hpp"
#include "lmseg/checkpoint.hpp"
#include "lmseg/config.hpp"
#include "lmseg/dual_graph.hpp"
#include "lmseg/error.hpp"
#include "lmseg/ga_layers.hpp"
#include "lmseg/grad_check.hpp"
#include "lmseg/graph_pooling.hpp"
#include "lmseg/mesh_io.hpp"
#include "lmseg/metrics.hpp"
#include "lmseg/network.hpp"
#include "lmseg/nn.hpp"
#include "lmseg/ops.hpp"
#include "lmseg/seed.hpp"
#include "lmseg/spatial_index.hpp"
#include "lmseg/synth.hpp"
#include "lmseg/tensor.hpp"
#include "lmseg/training.hpp"
