#pragma once

#include "error.hpp"
#include "rng.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "shape_reg.hpp"
#include "mdp.hpp"
#include "cfqi.hpp"
#include "policy.hpp"
#include "aiyagari.hpp"
#include "mfg_loop.hpp"
#include "oracle.hpp"
#include "config.hpp"
#include "experiment.hpp"
