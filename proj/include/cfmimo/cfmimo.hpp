// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink spectral-efficiency simulation for cell-free massive MIMO
// with multi-antenna users over jointly-correlated Rayleigh fading.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "cfmimo/channel.hpp"
#include "cfmimo/closed_form.hpp"
#include "cfmimo/combining.hpp"
#include "cfmimo/common.hpp"
#include "cfmimo/context.hpp"
#include "cfmimo/estimation.hpp"
#include "cfmimo/experiment.hpp"
#include "cfmimo/geometry.hpp"
#include "cfmimo/lsfd.hpp"
#include "cfmimo/se_engine.hpp"
#include "cfmimo/stats_io.hpp"
