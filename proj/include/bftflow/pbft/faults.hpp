// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Byzantine behaviour for the simulator: mutators that rewrite a message body
// into a conflicting but well-formed one.

#include "bftflow/p2p/sim_network.hpp"

namespace bftflow::pbft::faults {

/// Same (view, sequence), different batch and digest.
p2p::Mutator conflictingPrePrepare();
/// PREPARE or COMMIT for a digest nobody proposed.
p2p::Mutator conflictingVote();
/// A REPLY whose result claims the opposite outcome.
p2p::Mutator corruptedReply();
/// A CHECKPOINT for a state that never existed.
p2p::Mutator conflictingCheckpoint();

/// Installs all of the above on the network.
void installAll(p2p::SimulatedNetwork& net);

}  // namespace bftflow::pbft::faults
