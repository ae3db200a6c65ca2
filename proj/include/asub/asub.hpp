#pragma once

#include "asub/bayes.hpp"
#include "asub/error_metrics.hpp"
#include "asub/errors.hpp"
#include "asub/linalg.hpp"
#include "asub/parallel.hpp"
#include "asub/prob_model.hpp"
#include "asub/ridge.hpp"
#include "asub/rng.hpp"
#include "asub/subspace.hpp"
