#pragma once

// Umbrella header.

#include "rcti/attacks.hpp"
#include "rcti/dataset.hpp"
#include "rcti/energy.hpp"
#include "rcti/metrics.hpp"
#include "rcti/model_io.hpp"
#include "rcti/nn.hpp"
#include "rcti/rng.hpp"
#include "rcti/tensor.hpp"
#include "rcti/training.hpp"
#include "rcti/version.hpp"
