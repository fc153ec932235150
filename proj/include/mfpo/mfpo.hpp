#ifndef MFPO_MFPO_HPP
#define MFPO_MFPO_HPP

#include "codebook.hpp"
#include "config.hpp"
#include "core.hpp"
#include "dp.hpp"
#include "experiments.hpp"
#include "filter.hpp"
#include "json_io.hpp"
#include "lq_analytic.hpp"
#include "marginal_flow.hpp"
#include "measures.hpp"
#include "model.hpp"
#include "problem.hpp"
#include "quantize.hpp"
#include "rng.hpp"
#include "simkit.hpp"

#endif
