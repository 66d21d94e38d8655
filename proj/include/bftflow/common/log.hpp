// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <spdlog/spdlog.h>

namespace bftflow {

/// Shared process logger. Simulator runs keep it at warn to stay quiet.
spdlog::logger& log();

}  // namespace bftflow
