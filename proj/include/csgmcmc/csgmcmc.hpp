#pragma once

#include "csgmcmc/combine.hpp"
#include "csgmcmc/data.hpp"
#include "csgmcmc/diagnostics.hpp"
#include "csgmcmc/io.hpp"
#include "csgmcmc/model.hpp"
#include "csgmcmc/random.hpp"
#include "csgmcmc/sampler.hpp"
#include "csgmcmc/schedule.hpp"
