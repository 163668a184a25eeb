// pqap.hpp - umbrella header.
#pragma once

#include "cost.hpp"
#include "encode.hpp"
#include "init.hpp"
#include "io.hpp"
#include "pipeline.hpp"
#include "projections.hpp"
#include "random.hpp"
#include "solvers.hpp"
#include "synth.hpp"
#include "types.hpp"
