#pragma once

// Umbrella header for the full perception stack.

#include "config.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "fda.hpp"
#include "fusion.hpp"
#include "grasp.hpp"
#include "imageproc.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "memory.hpp"
#include "plc.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "types.hpp"
