// Copyright 2026 The marginrates Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mrl/distributions.hpp"
#include "mrl/erm.hpp"
#include "mrl/error.hpp"
#include "mrl/experiment.hpp"
#include "mrl/relu_net.hpp"
#include "mrl/risk_metrics.hpp"
#include "mrl/rng.hpp"
#include "mrl/stats.hpp"
#include "mrl/theory_bounds.hpp"
