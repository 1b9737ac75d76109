#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mtsconv {

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Central finite differences (h = 1e-5) against every layer's backward pass on
// random small shapes, one instance per seed. Instances where a perturbation
// flips an argmax (pooling or MTS branch) are redrawn.
std::vector<SelftestCheck> gradient_checks(std::size_t seeds = 20, double tolerance = 1e-6);

// Scale set {1} MTS models against standard models with equal seeds: logits,
// gradients and a few optimizer steps must match bit for bit.
std::vector<SelftestCheck> degenerate_equivalence_checks(std::uint64_t seed = 1, std::size_t steps = 3);

}  // namespace mtsconv
