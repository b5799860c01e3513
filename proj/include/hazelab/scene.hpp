#pragma once

#include <cstdint>

#include "hazelab/image.hpp"

namespace hazelab {

struct ProceduralScene {
    RgbImage image;
    StructureMap depth;  // metric depth in metres, all valid
};

// Synthetic outdoor-like RGB-D scene, a pure function of (seed, size):
//  - a blue-hued sky band above a random horizon, at depth max_depth;
//  - a textured gray/brown ground plane whose depth falls off with image row;
//  - green, strongly textured vegetation blobs;
//  - object blobs of arbitrary colour.
// Blobs take the ground depth at their base and are painted far to near.
ProceduralScene generate_procedural_scene(std::uint64_t seed, int height, int width,
                                          float max_depth = 14.0f);

}  // namespace hazelab
