#pragma once

#include <cstdint>
#include <vector>

#include "corefbench/schema.hpp"

namespace corefbench {

/// Templated schema generator for desk-scale experiments. Every instance
/// pairs one animate and one inanimate noun; the gap's context carries an
/// animacy cue, so the gold candidate is always the animate one. Candidate
/// order alternates, keeping labels balanced (chance = 50%) in any contiguous
/// split.
struct SyntheticOptions {
    std::size_t count = 500;
    std::uint64_t seed = 7;
};

std::vector<SchemaInstance> generate_synthetic_schemas(const SyntheticOptions& options = {});

}  // namespace corefbench
