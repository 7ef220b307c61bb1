#pragma once

// Umbrella header for the deep-sign-retrieval image codec library.

#include "dsr/bitio.hpp"
#include "dsr/codec.hpp"
#include "dsr/error.hpp"
#include "dsr/image.hpp"
#include "dsr/metrics.hpp"
#include "dsr/network.hpp"
#include "dsr/parallel.hpp"
#include "dsr/pocs.hpp"
#include "dsr/rangecoder.hpp"
#include "dsr/rng.hpp"
#include "dsr/synth.hpp"
#include "dsr/trainer.hpp"
#include "dsr/transform.hpp"
