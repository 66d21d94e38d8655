// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/common/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace bftflow {

spdlog::logger& log() {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("bftflow");
    l->set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("BFTFLOW_LOG")) l->set_level(spdlog::level::from_str(lvl));
    return l;
  }();
  return *logger;
}

}  // namespace bftflow
