// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "l2s/algorithms.hpp"
#include "l2s/bc.hpp"
#include "l2s/checkpoint.hpp"
#include "l2s/error.hpp"
#include "l2s/features.hpp"
#include "l2s/mdp.hpp"
#include "l2s/optim.hpp"
#include "l2s/oracle.hpp"
#include "l2s/policy.hpp"
#include "l2s/rng.hpp"
#include "l2s/rollin.hpp"
#include "l2s/state_space.hpp"
#include "l2s/tasks.hpp"
#include "l2s/value.hpp"
#include "l2s/version.hpp"
