#pragma once

#include "logitbench/config.hpp"
#include "logitbench/data.hpp"
#include "logitbench/errors.hpp"
#include "logitbench/harness.hpp"
#include "logitbench/losses.hpp"
#include "logitbench/matrix.hpp"
#include "logitbench/metrics.hpp"
#include "logitbench/model.hpp"
#include "logitbench/optimizer.hpp"
#include "logitbench/rng.hpp"
#include "logitbench/scores.hpp"
#include "logitbench/tape.hpp"
