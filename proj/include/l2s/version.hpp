// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace l2s {

inline constexpr const char* kVersion = "l2s-lab 0.1.0";

}  // namespace l2s
