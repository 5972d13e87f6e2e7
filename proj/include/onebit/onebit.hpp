#pragma once

#include "onebit/errors.hpp"
#include "onebit/rng.hpp"
#include "onebit/numerics.hpp"
#include "onebit/dataset.hpp"
#include "onebit/oracle.hpp"
#include "onebit/trainer.hpp"
#include "onebit/scheduler.hpp"
#include "onebit/config.hpp"
#include "onebit/experiment.hpp"
