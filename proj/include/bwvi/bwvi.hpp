#pragma once

#include "bwvi/dataset.hpp"
#include "bwvi/diagnostics.hpp"
#include "bwvi/error.hpp"
#include "bwvi/euclidean.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/gradients.hpp"
#include "bwvi/math.hpp"
#include "bwvi/objectives.hpp"
#include "bwvi/optimizers.hpp"
#include "bwvi/random.hpp"
#include "bwvi/targets.hpp"
