// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Umbrella header.

#pragma once

#include "channel.hpp"
#include "denoiser.hpp"
#include "eig.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "gram.hpp"
#include "guidance.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "link.hpp"
#include "mixture.hpp"
#include "neural.hpp"
#include "observation.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "tensor.hpp"
