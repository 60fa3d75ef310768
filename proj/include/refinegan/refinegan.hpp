#pragma once

// Umbrella header: the whole library.

#include "refinegan/common.hpp"
#include "refinegan/config.hpp"
#include "refinegan/core.hpp"
#include "refinegan/layers.hpp"
#include "refinegan/losses.hpp"
#include "refinegan/metrics.hpp"
#include "refinegan/mvol.hpp"
#include "refinegan/nets.hpp"
#include "refinegan/optim.hpp"
#include "refinegan/pbn.hpp"
#include "refinegan/preprocess.hpp"
#include "refinegan/report.hpp"
#include "refinegan/synth.hpp"
#include "refinegan/tensor.hpp"
#include "refinegan/train.hpp"
