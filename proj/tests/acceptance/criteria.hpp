// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

std::vector<Criterion> consensusCriteria();
std::vector<Criterion> chainCriteria();
std::vector<Criterion> engineCriteria();
std::vector<Criterion> clusterCriteria();

}  // namespace acceptance
