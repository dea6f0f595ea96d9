#pragma once

#include "ntkbias/errors.hpp"
#include "ntkbias/rng.hpp"
#include "ntkbias/sphere.hpp"
#include "ntkbias/harmonics.hpp"
#include "ntkbias/ntk.hpp"
#include "ntkbias/network.hpp"
#include "ntkbias/spectra.hpp"
#include "ntkbias/experiments.hpp"
#include "ntkbias/config.hpp"
#include "ntkbias/commands.hpp"
